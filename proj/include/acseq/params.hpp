#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace acseq {
class Rng;
}

namespace acseq::core {

using ParamId = std::uint32_t;

struct Param {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

enum class Init { Zeros, Uniform };

/// Named float64 parameters with paired gradients. Ids are assigned in
/// insertion order; `names()` iterates in name order.
class ParamStore {
 public:
  /// Uniform init draws from U(-scale, scale) using `rng`.
  ParamId add(std::string name, std::vector<std::uint32_t> shape, Init init, Rng* rng = nullptr,
              double scale = 0.08);

  ParamId id(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Param& operator[](ParamId id) { return params_[id]; }
  const Param& operator[](ParamId id) const { return params_[id]; }

  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;
  const std::map<std::string, ParamId>& names() const { return index_; }

  void zero_grads();
  double grad_norm() const;
  /// Scales all gradients so their global L2 norm is at most `max_norm`.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

  /// Flattened gradients in name order.
  std::vector<double> flat_grads() const;
  std::vector<double> flat_values() const;

  /// FNV-1a over names, shapes and value bits; equal stores hash equal.
  std::uint64_t value_hash() const;

 private:
  std::vector<Param> params_;
  std::map<std::string, ParamId> index_;
};

}  // namespace acseq::core
