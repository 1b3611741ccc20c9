#include "dfn/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dfn/errors.hpp"

namespace dfn {

double Rng::uniform() {
  // top 53 bits scaled by 2^-53
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo < hi)) throw InputError("uniform: lo must be < hi");
  return lo + (hi - lo) * uniform();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw InputError("uniform_int: lo must be <= hi");
  const std::uint64_t span =
      static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % span;  // multiple of span
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << (have_spare_ ? 1 : 0);
  if (have_spare_) {
    os << ' ' << std::hexfloat << spare_;
  }
  return os.str();
}

Rng Rng::deserialize(const std::string& text) {
  Rng r(0);
  std::istringstream is(text);
  is >> r.engine_;
  int flag = 0;
  is >> flag;
  if (is.fail()) throw IoError("rng state: parse failure");
  r.have_spare_ = flag != 0;
  if (r.have_spare_) {
    // std::hexfloat extraction is unreliable pre-C++23; parse via strtod
    std::string tok;
    is >> tok;
    if (tok.empty()) throw IoError("rng state: missing spare value");
    r.spare_ = std::strtod(tok.c_str(), nullptr);
  }
  return r;
}

std::uint64_t Rng::derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the golden-ratio sequence
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace dfn
