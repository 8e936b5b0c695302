#pragma once

#include <cstddef>

// Row-major blocked matrix products used by the convolution kernels. Every
// output element accumulates its inner dimension in ascending order, so the
// result is independent of how tiles are distributed over threads.
namespace adfnet::detail {

/// C[M x N] += A[M x K] * B[K x N]
template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc);

/// C[M x N] += A[M x K] * B[N x K]^T
template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc);

/// C[M x N] += A[K x M]^T * B[K x N]
template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc);

}  // namespace adfnet::detail
