#include <cstdlib>
#include <string>

#include "acseq/errors.hpp"
#include "variants.hpp"

namespace acseq::simd {

namespace {

constexpr KernelTable kScalar{scalar::dot, scalar::gemv, scalar::gemv_t_acc, scalar::ger_acc,
                              scalar::axpy};
#ifdef ACSEQ_HAVE_AVX2
constexpr KernelTable kAvx2{avx2::dot, avx2::gemv, avx2::gemv_t_acc, avx2::ger_acc, avx2::axpy};
#endif

Variant detect() {
  const char* env = std::getenv("ACSEQ_KERNELS");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return Variant::Scalar;
  if (want == "avx2") {
    if (!variant_supported(Variant::Avx2)) {
      throw InvalidArgument("ACSEQ_KERNELS=avx2 requested but the CPU lacks AVX2/FMA");
    }
    return Variant::Avx2;
  }
  if (want != "auto") throw InvalidArgument("ACSEQ_KERNELS must be scalar, avx2 or auto");
  return variant_supported(Variant::Avx2) ? Variant::Avx2 : Variant::Scalar;
}

Variant& active() {
  static Variant v = detect();
  return v;
}

const KernelTable*& table_slot() {
  static const KernelTable* t = &table(active());
  return t;
}

}  // namespace

bool variant_supported(Variant v) {
  if (v == Variant::Scalar) return true;
#ifdef ACSEQ_HAVE_AVX2
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& table(Variant v) {
#ifdef ACSEQ_HAVE_AVX2
  if (v == Variant::Avx2) {
    if (!variant_supported(v)) throw InvalidArgument("AVX2 kernels not supported on this CPU");
    return kAvx2;
  }
#else
  if (v == Variant::Avx2) throw InvalidArgument("AVX2 kernels not compiled in");
#endif
  return kScalar;
}

Variant active_variant() { return active(); }

void set_active_variant(Variant v) {
  table_slot() = &table(v);
  active() = v;
}

std::string_view variant_name(Variant v) { return v == Variant::Avx2 ? "avx2" : "scalar"; }

double dot(std::span<const double> a, std::span<const double> b) {
  return table_slot()->dot(a.data(), b.data(), a.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> b, std::span<double> y) {
  table_slot()->gemv(w.data(), rows, cols, x.data(), b.empty() ? nullptr : b.data(), y.data());
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> x_grad) {
  table_slot()->gemv_t_acc(w.data(), rows, cols, g.data(), x_grad.data());
}

void ger_acc(std::span<double> w_grad, std::size_t rows, std::size_t cols,
             std::span<const double> g, std::span<const double> x) {
  table_slot()->ger_acc(w_grad.data(), rows, cols, g.data(), x.data());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  table_slot()->axpy(a, x.data(), y.data(), x.size());
}

}  // namespace acseq::simd
