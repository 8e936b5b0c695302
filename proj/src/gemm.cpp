#include "gemm.hpp"

#include <algorithm>

#include "adfnet/parallel.hpp"

namespace adfnet::detail {
namespace {

constexpr std::size_t kRowBlock = 32;
constexpr std::size_t kColBlock = 512;
constexpr std::size_t kDepthBlock = 128;

std::size_t blocks(std::size_t extent, std::size_t block) { return (extent + block - 1) / block; }

}  // namespace

template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  if (M == 0 || N == 0 || K == 0) return;
  const std::size_t mb = blocks(M, kRowBlock), nb = blocks(N, kColBlock);
  parallel_for(mb * nb, [&](std::size_t tile) {
    const std::size_t i0 = (tile / nb) * kRowBlock, i1 = std::min(M, i0 + kRowBlock);
    const std::size_t j0 = (tile % nb) * kColBlock, j1 = std::min(N, j0 + kColBlock);
    const std::size_t len = j1 - j0;
    for (std::size_t k0 = 0; k0 < K; k0 += kDepthBlock) {
      const std::size_t k1 = std::min(K, k0 + kDepthBlock);
      std::size_t i = i0;
      for (; i + 4 <= i1; i += 4) {
        T* __restrict c0 = C + i * ldc + j0;
        T* __restrict c1 = c0 + ldc;
        T* __restrict c2 = c1 + ldc;
        T* __restrict c3 = c2 + ldc;
        for (std::size_t k = k0; k < k1; ++k) {
          const T a0 = A[i * lda + k], a1 = A[(i + 1) * lda + k], a2 = A[(i + 2) * lda + k],
                  a3 = A[(i + 3) * lda + k];
          const T* __restrict b = B + k * ldb + j0;
          for (std::size_t j = 0; j < len; ++j) {
            const T bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < i1; ++i) {
        T* __restrict c = C + i * ldc + j0;
        for (std::size_t k = k0; k < k1; ++k) {
          const T a = A[i * lda + k];
          const T* __restrict b = B + k * ldb + j0;
          for (std::size_t j = 0; j < len; ++j) c[j] += a * b[j];
        }
      }
    }
  });
}

template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  if (M == 0 || N == 0 || K == 0) return;
  parallel_for(M * N, [&](std::size_t idx) {
    const std::size_t i = idx / N, j = idx % N;
    const T* __restrict a = A + i * lda;
    const T* __restrict b = B + j * ldb;
    // Eight fixed lanes keep the summation order deterministic while letting
    // the compiler vectorize the dot product.
    T lane[8] = {};
    std::size_t k = 0;
    for (; k + 8 <= K; k += 8)
      for (std::size_t l = 0; l < 8; ++l) lane[l] += a[k + l] * b[k + l];
    T acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
    for (; k < K; ++k) acc += a[k] * b[k];
    C[i * ldc + j] += acc;
  });
}

template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  if (M == 0 || N == 0 || K == 0) return;
  const std::size_t mb = blocks(M, kRowBlock), nb = blocks(N, kColBlock);
  parallel_for(mb * nb, [&](std::size_t tile) {
    const std::size_t i0 = (tile / nb) * kRowBlock, i1 = std::min(M, i0 + kRowBlock);
    const std::size_t j0 = (tile % nb) * kColBlock, j1 = std::min(N, j0 + kColBlock);
    const std::size_t len = j1 - j0;
    for (std::size_t i = i0; i < i1; ++i) {
      T* __restrict c = C + i * ldc + j0;
      for (std::size_t k = 0; k < K; ++k) {
        const T a = A[k * lda + i];
        const T* __restrict b = B + k * ldb + j0;
        for (std::size_t j = 0; j < len; ++j) c[j] += a * b[j];
      }
    }
  });
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                             const float*, std::size_t, float*, std::size_t);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                              const double*, std::size_t, double*, std::size_t);

}  // namespace adfnet::detail
