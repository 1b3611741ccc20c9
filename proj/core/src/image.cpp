#include "dfn/image.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>

#include <zlib.h>

#include "dfn/bytes.hpp"

namespace dfn {

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  if (size < 0) {
    std::fclose(f);
    throw IoError("cannot stat " + path);
  }
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  const std::size_t got = size ? std::fread(bytes.data(), 1, bytes.size(), f) : 0;
  std::fclose(f);
  if (got != bytes.size()) throw IoError("short read on " + path);
  return bytes;
}

void write_binary_file(const std::string& path, const void* data, std::size_t size) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot create " + path);
  const std::size_t put = size ? std::fwrite(data, 1, size, f) : 0;
  const bool ok = put == size && std::fclose(f) == 0;
  if (!ok) throw IoError("short write on " + path);
}

namespace {

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

// --- PGM ---

struct PgmCursor {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t i = 0;
  const std::string& origin;

  // skips whitespace and '#' comment lines between header tokens
  void skip_space() {
    while (i < n) {
      if (std::isspace(p[i])) {
        ++i;
      } else if (p[i] == '#') {
        while (i < n && p[i] != '\n') ++i;
      } else {
        break;
      }
    }
  }
  int next_int() {
    skip_space();
    if (i >= n || !std::isdigit(p[i]))
      throw IoError(origin + ": malformed PGM header");
    long v = 0;
    while (i < n && std::isdigit(p[i])) {
      v = v * 10 + (p[i] - '0');
      if (v > 1 << 30) throw IoError(origin + ": absurd PGM header value");
      ++i;
    }
    return static_cast<int>(v);
  }
};

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  PgmCursor cur{bytes.data(), bytes.size(), 0, origin};
  cur.i = 2;  // past "P5"
  const int w = cur.next_int();
  const int h = cur.next_int();
  const int maxval = cur.next_int();
  if (w <= 0 || h <= 0) throw IoError(origin + ": bad PGM dimensions");
  if (maxval <= 0 || maxval > 255)
    throw IoError(origin + ": only 8-bit PGM supported (maxval " + std::to_string(maxval) + ")");
  if (cur.i >= cur.n || !std::isspace(bytes[cur.i]))
    throw IoError(origin + ": malformed PGM header");
  ++cur.i;  // single whitespace separating header from raster
  const std::size_t need = static_cast<std::size_t>(w) * h;
  if (bytes.size() - cur.i < need) throw IoError(origin + ": truncated PGM raster");
  GrayImage img(h, w);
  std::memcpy(img.pixels.data(), bytes.data() + cur.i, need);
  return img;
}

// --- PNG ---

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* src, std::size_t n,
                                       std::size_t expect, const std::string& origin) {
  std::vector<std::uint8_t> out(expect);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw IoError(origin + ": zlib init failed");
  zs.next_in = const_cast<Bytef*>(src);
  zs.avail_in = static_cast<uInt>(n);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.avail_out != 0)
    throw IoError(origin + ": PNG data corrupt (inflate rc " + std::to_string(rc) + ")");
  return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0)
    throw IoError(origin + ": not a PNG");

  std::size_t i = 8;
  int w = 0, h = 0, bit_depth = 0, color_type = 0;
  bool have_ihdr = false, have_iend = false;
  std::vector<std::uint8_t> idat;

  while (i < bytes.size()) {
    if (bytes.size() - i < 12) throw IoError(origin + ": truncated PNG chunk");
    std::uint32_t len = 0;
    for (int k = 0; k < 4; ++k) len = (len << 8) | bytes[i + k];
    const std::uint8_t* type = bytes.data() + i + 4;
    if (bytes.size() - i < 12 + static_cast<std::size_t>(len))
      throw IoError(origin + ": truncated PNG chunk");
    const std::uint8_t* data = bytes.data() + i + 8;

    std::uint32_t want_crc = 0;
    for (int k = 0; k < 4; ++k) want_crc = (want_crc << 8) | data[len + k];
    const std::uint32_t got_crc = static_cast<std::uint32_t>(
        crc32(crc32(0L, type, 4), data, len));
    if (want_crc != got_crc) throw IoError(origin + ": PNG chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError(origin + ": bad IHDR");
      for (int k = 0; k < 4; ++k) w = (w << 8) | data[k];
      for (int k = 0; k < 4; ++k) h = (h << 8) | data[4 + k];
      bit_depth = data[8];
      color_type = data[9];
      if (data[10] != 0 || data[11] != 0) throw IoError(origin + ": bad PNG compression/filter method");
      if (data[12] != 0) throw IoError(origin + ": interlaced PNG not supported");
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      have_iend = true;
      break;
    }
    // ancillary chunks are skipped
    i += 12 + len;
  }
  if (!have_ihdr || !have_iend) throw IoError(origin + ": PNG missing IHDR/IEND");
  if (w <= 0 || h <= 0) throw IoError(origin + ": bad PNG dimensions");
  if (bit_depth != 8 || (color_type != 0 && color_type != 2))
    throw IoError(origin + ": only 8-bit grayscale or RGB PNG supported");

  const int bpp = color_type == 0 ? 1 : 3;
  const std::size_t stride = static_cast<std::size_t>(w) * bpp;
  auto raw = zlib_inflate(idat.data(), idat.size(), (stride + 1) * h, origin);

  // unfilter in place, row by row
  std::vector<std::uint8_t> prev(stride, 0);
  GrayImage img(h, w);
  std::vector<std::uint8_t> row(stride);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    const int filter = src[0];
    ++src;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(bpp) ? row[x - bpp] : 0;
      const int b = prev[x];
      const int c = x >= static_cast<std::size_t>(bpp) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError(origin + ": bad PNG filter type " + std::to_string(filter));
      }
      row[x] = static_cast<std::uint8_t>(v);
    }
    if (bpp == 1) {
      std::memcpy(&img.pixels[static_cast<std::size_t>(y) * w], row.data(), stride);
    } else {
      for (int x = 0; x < w; ++x) {
        const int r = row[3 * x], g = row[3 * x + 1], b = row[3 * x + 2];
        img.at(y, x) = static_cast<std::uint8_t>((77 * r + 150 * g + 29 * b + 128) >> 8);
      }
    }
    prev = row;
  }
  return img;
}

void put_png_chunk(std::vector<std::uint8_t>& out, const char* type,
                   const std::uint8_t* data, std::size_t len) {
  for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(len >> (8 * k)));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data, data + len);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(crc32(0L, out.data() + type_at, 4), data, static_cast<uInt>(len)));
  for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(crc >> (8 * k)));
}

}  // namespace

GrayImage decode_image(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
    return decode_pgm(bytes, origin);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
    return decode_png(bytes, origin);
  throw IoError(origin + ": unrecognized image format (want PGM P5 or PNG)");
}

GrayImage load_image(const std::string& path) {
  return decode_image(read_binary_file(path), path);
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);

  std::uint8_t ihdr[13];
  for (int k = 0; k < 4; ++k) ihdr[k] = static_cast<std::uint8_t>(img.width >> (8 * (3 - k)));
  for (int k = 0; k < 4; ++k) ihdr[4 + k] = static_cast<std::uint8_t>(img.height >> (8 * (3 - k)));
  ihdr[8] = 8;   // bit depth
  ihdr[9] = 0;   // grayscale
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  put_png_chunk(out, "IHDR", ihdr, 13);

  const std::size_t stride = static_cast<std::size_t>(img.width);
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* dst = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    dst[0] = 0;  // filter: none
    std::memcpy(dst + 1, &img.pixels[static_cast<std::size_t>(y) * img.width], stride);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("PNG encode: deflate failed");
  put_png_chunk(out, "IDAT", comp.data(), comp_len);
  put_png_chunk(out, "IEND", nullptr, 0);
  return out;
}

void save_pgm(const GrayImage& img, const std::string& path) {
  const auto bytes = encode_pgm(img);
  write_binary_file(path, bytes.data(), bytes.size());
}

void save_png(const GrayImage& img, const std::string& path) {
  const auto bytes = encode_png(img);
  write_binary_file(path, bytes.data(), bytes.size());
}

}  // namespace dfn
