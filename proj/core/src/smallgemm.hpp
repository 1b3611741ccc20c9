#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>

// Hand-tiled float GEMM panels for the thin products dense conv layers make.
// General BLAS kernels block for dozens of output rows; conv here has at most
// a growth-rate worth (cout <= 12), so register tiles sized to that beat the
// generic path. Everything falls back to Eigen when AVX-512 is unavailable.

#if defined(__AVX512F__)
#include <immintrin.h>

namespace dfn::detail {

inline constexpr bool small_gemm_enabled = true;

namespace sg {

// C[M x N] = A[M x K] * B[K x N] for one chunk of MB rows; two column tiles
// stay in registers while K streams. bias_init seeds row r with bias[m0+r].
template <int MB>
inline void small_mn_panel(const float* A, const float* B, std::int64_t ldb,
                           float* C, std::int64_t ldc, int m0, int K, int N,
                           const float* bias_init) {
  const auto row_init = [&](int r) {
    return bias_init ? _mm512_set1_ps(bias_init[m0 + r]) : _mm512_setzero_ps();
  };
  int n0 = 0;
  for (; n0 + 32 <= N; n0 += 32) {
    __m512 c0[MB], c1[MB];
    for (int r = 0; r < MB; ++r) {
      c0[r] = row_init(r);
      c1[r] = row_init(r);
    }
    for (int k = 0; k < K; ++k) {
      const __m512 b0 = _mm512_loadu_ps(B + static_cast<std::size_t>(k) * ldb + n0);
      const __m512 b1 =
          _mm512_loadu_ps(B + static_cast<std::size_t>(k) * ldb + n0 + 16);
      for (int r = 0; r < MB; ++r) {
        const __m512 a = _mm512_set1_ps(A[(m0 + r) * K + k]);
        c0[r] = _mm512_fmadd_ps(a, b0, c0[r]);
        c1[r] = _mm512_fmadd_ps(a, b1, c1[r]);
      }
    }
    for (int r = 0; r < MB; ++r) {
      _mm512_storeu_ps(C + static_cast<std::size_t>(m0 + r) * ldc + n0, c0[r]);
      _mm512_storeu_ps(C + static_cast<std::size_t>(m0 + r) * ldc + n0 + 16, c1[r]);
    }
  }
  for (; n0 < N; n0 += 16) {
    const int rem = N - n0;
    const __mmask16 mask =
        rem >= 16 ? static_cast<__mmask16>(0xFFFF)
                  : static_cast<__mmask16>((1u << rem) - 1u);
    __m512 c0[MB];
    for (int r = 0; r < MB; ++r) c0[r] = row_init(r);
    for (int k = 0; k < K; ++k) {
      const __m512 b0 =
          _mm512_maskz_loadu_ps(mask, B + static_cast<std::size_t>(k) * ldb + n0);
      for (int r = 0; r < MB; ++r)
        c0[r] = _mm512_fmadd_ps(_mm512_set1_ps(A[(m0 + r) * K + k]), b0, c0[r]);
    }
    for (int r = 0; r < MB; ++r)
      _mm512_mask_storeu_ps(C + static_cast<std::size_t>(m0 + r) * ldc + n0,
                            mask, c0[r]);
  }
}

// C[m0..m0+MB) x [0..J) += A-rows (contiguous in P) dotted with B rows.
template <int MB>
inline void abt_panel(const float* A, std::int64_t lda, const float* B,
                      std::int64_t ldb, float* C, int m0, int J,
                      std::int64_t P) {
  int j0 = 0;
  for (; j0 + 2 <= J; j0 += 2) {
    __m512 acc0[MB], acc1[MB];
    for (int r = 0; r < MB; ++r) {
      acc0[r] = _mm512_setzero_ps();
      acc1[r] = _mm512_setzero_ps();
    }
    const float* b0 = B + static_cast<std::size_t>(j0) * ldb;
    const float* b1 = B + static_cast<std::size_t>(j0 + 1) * ldb;
    std::int64_t p = 0;
    for (; p + 16 <= P; p += 16) {
      const __m512 vb0 = _mm512_loadu_ps(b0 + p);
      const __m512 vb1 = _mm512_loadu_ps(b1 + p);
      for (int r = 0; r < MB; ++r) {
        const __m512 a =
            _mm512_loadu_ps(A + static_cast<std::size_t>(m0 + r) * lda + p);
        acc0[r] = _mm512_fmadd_ps(a, vb0, acc0[r]);
        acc1[r] = _mm512_fmadd_ps(a, vb1, acc1[r]);
      }
    }
    if (p < P) {
      const __mmask16 mask = static_cast<__mmask16>((1u << (P - p)) - 1u);
      const __m512 vb0 = _mm512_maskz_loadu_ps(mask, b0 + p);
      const __m512 vb1 = _mm512_maskz_loadu_ps(mask, b1 + p);
      for (int r = 0; r < MB; ++r) {
        const __m512 a = _mm512_maskz_loadu_ps(
            mask, A + static_cast<std::size_t>(m0 + r) * lda + p);
        acc0[r] = _mm512_fmadd_ps(a, vb0, acc0[r]);
        acc1[r] = _mm512_fmadd_ps(a, vb1, acc1[r]);
      }
    }
    for (int r = 0; r < MB; ++r) {
      C[static_cast<std::size_t>(m0 + r) * J + j0] += _mm512_reduce_add_ps(acc0[r]);
      C[static_cast<std::size_t>(m0 + r) * J + j0 + 1] +=
          _mm512_reduce_add_ps(acc1[r]);
    }
  }
  if (j0 < J) {
    __m512 acc0[MB];
    for (int r = 0; r < MB; ++r) acc0[r] = _mm512_setzero_ps();
    const float* b0 = B + static_cast<std::size_t>(j0) * ldb;
    std::int64_t p = 0;
    for (; p + 16 <= P; p += 16) {
      const __m512 vb0 = _mm512_loadu_ps(b0 + p);
      for (int r = 0; r < MB; ++r)
        acc0[r] = _mm512_fmadd_ps(
            _mm512_loadu_ps(A + static_cast<std::size_t>(m0 + r) * lda + p),
            vb0, acc0[r]);
    }
    if (p < P) {
      const __mmask16 mask = static_cast<__mmask16>((1u << (P - p)) - 1u);
      const __m512 vb0 = _mm512_maskz_loadu_ps(mask, b0 + p);
      for (int r = 0; r < MB; ++r)
        acc0[r] = _mm512_fmadd_ps(
            _mm512_maskz_loadu_ps(
                mask, A + static_cast<std::size_t>(m0 + r) * lda + p),
            vb0, acc0[r]);
    }
    for (int r = 0; r < MB; ++r)
      C[static_cast<std::size_t>(m0 + r) * J + j0] += _mm512_reduce_add_ps(acc0[r]);
  }
}

// C[M x N] (+)= W^T * B where W is row-major [K x M] and K stays in
// registers: per column tile all K rows of B are held, then M streams.
template <int KB>
inline void wtb_panel(const float* W, const float* B, std::int64_t ldb,
                      float* C, std::int64_t ldc, int M, int N,
                      bool accumulate) {
  int n0 = 0;
  for (; n0 < N; n0 += 16) {
    const int rem = N - n0;
    const bool full = rem >= 16;
    const __mmask16 mask =
        full ? static_cast<__mmask16>(0xFFFF)
             : static_cast<__mmask16>((1u << rem) - 1u);
    __m512 b[KB];
    for (int k = 0; k < KB; ++k)
      b[k] = full ? _mm512_loadu_ps(B + static_cast<std::size_t>(k) * ldb + n0)
                  : _mm512_maskz_loadu_ps(
                        mask, B + static_cast<std::size_t>(k) * N + n0);
    for (int m = 0; m < M; ++m) {
      float* cp = C + static_cast<std::size_t>(m) * ldc + n0;
      __m512 acc = accumulate
                       ? (full ? _mm512_loadu_ps(cp) : _mm512_maskz_loadu_ps(mask, cp))
                       : _mm512_setzero_ps();
      for (int k = 0; k < KB; ++k)
        acc = _mm512_fmadd_ps(_mm512_set1_ps(W[static_cast<std::size_t>(k) * M + m]),
                              b[k], acc);
      if (full)
        _mm512_storeu_ps(cp, acc);
      else
        _mm512_mask_storeu_ps(cp, mask, acc);
    }
  }
}

}  // namespace sg

// C[M x N] = A[M x K] * B[K x N], row-major. bias_init, when given, seeds
// every output row's columns with bias_init[row].
inline void gemm_small_m(const float* A, const float* B, std::int64_t ldb,
                         float* C, std::int64_t ldc, int M, int K, int N,
                         const float* bias_init) {
  for (int m0 = 0; m0 < M;) {
    const int mb = std::min(12, M - m0);
    switch (mb) {
      case 12: sg::small_mn_panel<12>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 11: sg::small_mn_panel<11>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 10: sg::small_mn_panel<10>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 9: sg::small_mn_panel<9>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 8: sg::small_mn_panel<8>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 7: sg::small_mn_panel<7>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 6: sg::small_mn_panel<6>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 5: sg::small_mn_panel<5>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 4: sg::small_mn_panel<4>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 3: sg::small_mn_panel<3>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      case 2: sg::small_mn_panel<2>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
      default: sg::small_mn_panel<1>(A, B, ldb, C, ldc, m0, K, N, bias_init); break;
    }
    m0 += mb;
  }
}

// C[M x J] += A[M x P] * B[J x P]^T; contraction over the contiguous axis.
inline void gemm_abt_acc(const float* A, std::int64_t lda, const float* B,
                         std::int64_t ldb, float* C, int M, int J,
                         std::int64_t P) {
  for (int m0 = 0; m0 < M;) {
    const int mb = std::min(12, M - m0);
    switch (mb) {
      case 12: sg::abt_panel<12>(A, lda, B, ldb, C, m0, J, P); break;
      case 11: sg::abt_panel<11>(A, lda, B, ldb, C, m0, J, P); break;
      case 10: sg::abt_panel<10>(A, lda, B, ldb, C, m0, J, P); break;
      case 9: sg::abt_panel<9>(A, lda, B, ldb, C, m0, J, P); break;
      case 8: sg::abt_panel<8>(A, lda, B, ldb, C, m0, J, P); break;
      case 7: sg::abt_panel<7>(A, lda, B, ldb, C, m0, J, P); break;
      case 6: sg::abt_panel<6>(A, lda, B, ldb, C, m0, J, P); break;
      case 5: sg::abt_panel<5>(A, lda, B, ldb, C, m0, J, P); break;
      case 4: sg::abt_panel<4>(A, lda, B, ldb, C, m0, J, P); break;
      case 3: sg::abt_panel<3>(A, lda, B, ldb, C, m0, J, P); break;
      case 2: sg::abt_panel<2>(A, lda, B, ldb, C, m0, J, P); break;
      default: sg::abt_panel<1>(A, lda, B, ldb, C, m0, J, P); break;
    }
    m0 += mb;
  }
}

// C[M x N] (+)= W^T[M x K] * B[K x N] with W row-major [K x M]; K <= 12.
inline bool gemm_wt_b(const float* W, const float* B, std::int64_t ldb,
                      float* C, std::int64_t ldc, int M, int K, int N,
                      bool accumulate) {
  if (K < 1 || K > 12) return false;
  switch (K) {
    case 12: sg::wtb_panel<12>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 11: sg::wtb_panel<11>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 10: sg::wtb_panel<10>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 9: sg::wtb_panel<9>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 8: sg::wtb_panel<8>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 7: sg::wtb_panel<7>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 6: sg::wtb_panel<6>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 5: sg::wtb_panel<5>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 4: sg::wtb_panel<4>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 3: sg::wtb_panel<3>(W, B, ldb, C, ldc, M, N, accumulate); break;
    case 2: sg::wtb_panel<2>(W, B, ldb, C, ldc, M, N, accumulate); break;
    default: sg::wtb_panel<1>(W, B, ldb, C, ldc, M, N, accumulate); break;
  }
  return true;
}

}  // namespace dfn::detail

#else

namespace dfn::detail {

inline constexpr bool small_gemm_enabled = false;

inline void gemm_small_m(const float*, const float*, std::int64_t, float*,
                         std::int64_t, int, int, int, const float*) {}
inline void gemm_abt_acc(const float*, std::int64_t, const float*,
                         std::int64_t, float*, int, int, std::int64_t) {}
inline bool gemm_wt_b(const float*, const float*, std::int64_t, float*,
                      std::int64_t, int, int, int, bool) {
  return false;
}

}  // namespace dfn::detail

#endif
