#pragma once

// Dense float64 kernels used by the tape. Every kernel has a scalar
// reference version and, where the CPU supports it, an AVX2+FMA version.
// The variant is chosen once at startup (ACSEQ_KERNELS=scalar|avx2|auto).

#include <cstddef>
#include <span>
#include <string_view>

namespace acseq::simd {

enum class Variant { Scalar, Avx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y = W x (+ b); W is rows x cols row-major; b may be null.
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* b, double* y);
  // x_grad += W^T g
  void (*gemv_t_acc)(const double* w, std::size_t rows, std::size_t cols, const double* g,
                     double* x_grad);
  // W_grad += g x^T
  void (*ger_acc)(double* w_grad, std::size_t rows, std::size_t cols, const double* g,
                  const double* x);
  // y += a x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

const KernelTable& table(Variant v);
bool variant_supported(Variant v);

Variant active_variant();
/// Overrides runtime selection; throws InvalidArgument if unsupported.
void set_active_variant(Variant v);
std::string_view variant_name(Variant v);

// Span wrappers over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> b, std::span<double> y);
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> x_grad);
void ger_acc(std::span<double> w_grad, std::size_t rows, std::size_t cols,
             std::span<const double> g, std::span<const double> x);
void axpy(double a, std::span<const double> x, std::span<double> y);

}  // namespace acseq::simd
