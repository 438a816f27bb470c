#include "acseq/params.hpp"

#include <cmath>
#include <cstring>

#include "acseq/errors.hpp"
#include "acseq/rng.hpp"

namespace acseq::core {

ParamId ParamStore::add(std::string name, std::vector<std::uint32_t> shape, Init init, Rng* rng,
                        double scale) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  Param p{name, std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  if (init == Init::Uniform) {
    if (!rng) throw InvalidArgument("uniform init requires an rng");
    for (double& v : p.value) v = rng->uniform(-scale, scale);
  }
  const auto id = static_cast<ParamId>(params_.size());
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), id);
  return id;
}

ParamId ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [name, id] : index_) {
    for (double g : params_[id].grad) s += g * g;
  }
  return std::sqrt(s);
}

double ParamStore::clip_grad_norm(double max_norm) {
  const double norm = grad_norm();
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
    const double k = max_norm / norm;
    for (auto& p : params_) {
      for (double& g : p.grad) g *= k;
    }
  }
  return norm;
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, id] : index_) {
    out.insert(out.end(), params_[id].grad.begin(), params_[id].grad.end());
  }
  return out;
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, id] : index_) {
    out.insert(out.end(), params_[id].value.begin(), params_[id].value.end());
  }
  return out;
}

std::uint64_t ParamStore::value_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, id] : index_) {
    const Param& p = params_[id];
    feed(name.data(), name.size());
    feed(p.shape.data(), p.shape.size() * sizeof(std::uint32_t));
    feed(p.value.data(), p.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace acseq::core
