#pragma once

#include "acseq/simd/kernels.hpp"

namespace acseq::simd {

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, const double* b,
          double* y);
void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g,
                double* x_grad);
void ger_acc(double* w_grad, std::size_t rows, std::size_t cols, const double* g,
             const double* x);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace scalar

#ifdef ACSEQ_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, const double* b,
          double* y);
void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g,
                double* x_grad);
void ger_acc(double* w_grad, std::size_t rows, std::size_t cols, const double* g,
             const double* x);
void axpy(double a, const double* x, double* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace acseq::simd
