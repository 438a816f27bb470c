#include "acseq/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "acseq/errors.hpp"
#include "acseq/simd/kernels.hpp"

namespace acseq::core {

namespace {

std::atomic<int> g_fault{-1};

constexpr double kFaultScale = 1.001;

}  // namespace

namespace testing {
void set_backward_fault(std::optional<OpKind> kind) {
  g_fault.store(kind ? static_cast<int>(*kind) : -1);
}
std::optional<OpKind> backward_fault() {
  const int v = g_fault.load();
  if (v < 0) return std::nullopt;
  return static_cast<OpKind>(v);
}
}  // namespace testing

std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::Constant: return "constant";
    case OpKind::Param: return "param";
    case OpKind::Dense: return "dense";
    case OpKind::Embedding: return "embedding";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Slice: return "slice";
    case OpKind::SoftmaxXent: return "softmax_xent";
    case OpKind::SquaredError: return "squared_error";
    case OpKind::Sum: return "sum";
  }
  return "?";
}

std::optional<OpKind> parse_op(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(OpKind::Sum); ++i) {
    if (op_name(static_cast<OpKind>(i)) == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

std::vector<double> dense_forward(std::span<const double> x, std::span<const double> w,
                                  std::size_t rows, std::size_t cols,
                                  std::span<const double> b) {
  if (x.size() != cols || w.size() != rows * cols || (!b.empty() && b.size() != rows)) {
    throw InvalidArgument("dense_forward: shape mismatch");
  }
  std::vector<double> out(rows);
  simd::gemv(w, rows, cols, x, b, out);
  return out;
}

std::vector<double> softmax(std::span<const double> logits, std::size_t min_allowed) {
  if (min_allowed >= logits.size()) throw InvalidArgument("softmax: every entry is masked");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i])) throw InvalidArgument("softmax: NaN logit");
    if (i >= min_allowed) mx = std::max(mx, logits[i]);
  }
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = min_allowed; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (std::size_t i = min_allowed; i < logits.size(); ++i) p[i] /= z;
  return p;
}

std::vector<double> log_softmax(std::span<const double> logits, std::size_t min_allowed) {
  if (min_allowed >= logits.size()) throw InvalidArgument("log_softmax: every entry is masked");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits[i])) throw InvalidArgument("log_softmax: NaN logit");
    if (i >= min_allowed) mx = std::max(mx, logits[i]);
  }
  double z = 0.0;
  for (std::size_t i = min_allowed; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  const double lz = mx + std::log(z);
  std::vector<double> out(logits.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = min_allowed; i < logits.size(); ++i) out[i] = logits[i] - lz;
  return out;
}

// ----------------------------------------------------------------- forward

NodeId Tape::push(Node n, std::size_t len) {
  n.off = values_.size();
  n.len = len;
  values_.resize(values_.size() + len, 0.0);
  nodes_.push_back(n);
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check(NodeId n) const {
  if (n >= nodes_.size()) throw InvalidState("tape node does not exist (no forward recorded)");
}

std::span<const double> Tape::value(NodeId n) const {
  check(n);
  return std::span<const double>(values_).subspan(nodes_[n].off, nodes_[n].len);
}

std::span<const double> Tape::probs(NodeId n) const {
  check(n);
  if (nodes_[n].kind != OpKind::SoftmaxXent) throw InvalidArgument("probs: not a softmax_xent node");
  return std::span<const double>(values_).subspan(nodes_[n].aux, nodes_[n].aux_len);
}

NodeId Tape::constant(std::span<const double> v) {
  const NodeId id = push(Node{OpKind::Constant}, v.size());
  std::copy(v.begin(), v.end(), values_.begin() + nodes_[id].off);
  return id;
}

NodeId Tape::param(ParamId p) {
  const Param& prm = (*store_)[p];
  Node n{OpKind::Param};
  n.p0 = p;
  const NodeId id = push(n, prm.size());
  std::copy(prm.value.begin(), prm.value.end(), values_.begin() + nodes_[id].off);
  return id;
}

NodeId Tape::dense(NodeId x, ParamId w, std::optional<ParamId> b) {
  check(x);
  const Param& W = (*store_)[w];
  if (W.shape.size() != 2 || W.cols() != nodes_[x].len) {
    throw InvalidArgument("dense: weight " + W.name + " does not match input size");
  }
  if (b && (*store_)[*b].size() != W.rows()) throw InvalidArgument("dense: bias size mismatch");
  Node n{OpKind::Dense};
  n.a = x;
  n.p0 = w;
  n.has_bias = b.has_value();
  n.p1 = b.value_or(0);
  const NodeId id = push(n, W.rows());
  std::span<const double> bias;
  if (b) bias = (*store_)[*b].value;
  simd::gemv(W.value, W.rows(), W.cols(), value(x), bias,
             std::span<double>(values_).subspan(nodes_[id].off, W.rows()));
  return id;
}

NodeId Tape::embedding(ParamId table, TokenId row) {
  const Param& E = (*store_)[table];
  if (E.shape.size() != 2 || row >= E.rows()) {
    throw InvalidArgument("embedding: token id out of range for " + E.name);
  }
  Node n{OpKind::Embedding};
  n.p0 = table;
  n.index = row;
  const NodeId id = push(n, E.cols());
  std::copy_n(E.value.begin() + row * E.cols(), E.cols(), values_.begin() + nodes_[id].off);
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (nodes_[a].len != nodes_[b].len) throw InvalidArgument("add: size mismatch");
  Node n{OpKind::Add};
  n.a = a;
  n.b = b;
  const NodeId id = push(n, nodes_[a].len);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) {
    values_[nodes_[id].off + i] = values_[nodes_[a].off + i] + values_[nodes_[b].off + i];
  }
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (nodes_[a].len != nodes_[b].len) throw InvalidArgument("mul: size mismatch");
  Node n{OpKind::Mul};
  n.a = a;
  n.b = b;
  const NodeId id = push(n, nodes_[a].len);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) {
    values_[nodes_[id].off + i] = values_[nodes_[a].off + i] * values_[nodes_[b].off + i];
  }
  return id;
}

NodeId Tape::sigmoid(NodeId a) {
  check(a);
  Node n{OpKind::Sigmoid};
  n.a = a;
  const NodeId id = push(n, nodes_[a].len);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) {
    values_[nodes_[id].off + i] = 1.0 / (1.0 + std::exp(-values_[nodes_[a].off + i]));
  }
  return id;
}

NodeId Tape::tanh(NodeId a) {
  check(a);
  Node n{OpKind::Tanh};
  n.a = a;
  const NodeId id = push(n, nodes_[a].len);
  for (std::size_t i = 0; i < nodes_[id].len; ++i) {
    values_[nodes_[id].off + i] = std::tanh(values_[nodes_[a].off + i]);
  }
  return id;
}

NodeId Tape::slice(NodeId a, std::size_t offset, std::size_t len) {
  check(a);
  if (offset + len > nodes_[a].len) throw InvalidArgument("slice: out of range");
  Node n{OpKind::Slice};
  n.a = a;
  n.index = offset;
  const NodeId id = push(n, len);
  std::copy_n(values_.begin() + nodes_[a].off + offset, len, values_.begin() + nodes_[id].off);
  return id;
}

NodeId Tape::softmax_xent(NodeId logits, TokenId target, double weight,
                          std::size_t min_allowed) {
  check(logits);
  const std::size_t k = nodes_[logits].len;
  if (target >= k || target < min_allowed) throw InvalidArgument("softmax_xent: invalid target");
  const std::vector<double> lp = log_softmax(value(logits), min_allowed);
  Node n{OpKind::SoftmaxXent};
  n.a = logits;
  n.index = min_allowed;
  n.s0 = weight;
  n.p0 = target;
  const NodeId id = push(n, 1);
  nodes_[id].aux = values_.size();
  nodes_[id].aux_len = k;
  values_.resize(values_.size() + k);
  for (std::size_t i = 0; i < k; ++i) {
    values_[nodes_[id].aux + i] = i < min_allowed ? 0.0 : std::exp(lp[i]);
  }
  values_[nodes_[id].off] = -weight * lp[target];
  return id;
}

NodeId Tape::squared_error(NodeId pred, double target, double weight) {
  check(pred);
  if (nodes_[pred].len != 1) throw InvalidArgument("squared_error: prediction must be scalar");
  Node n{OpKind::SquaredError};
  n.a = pred;
  n.s0 = weight;
  n.s1 = target;
  const NodeId id = push(n, 1);
  const double d = values_[nodes_[pred].off] - target;
  values_[nodes_[id].off] = weight * d * d;
  return id;
}

NodeId Tape::sum(std::span<const NodeId> parts) {
  if (parts.empty()) throw InvalidArgument("sum: no inputs");
  for (NodeId p : parts) {
    check(p);
    if (nodes_[p].len != nodes_[parts[0]].len) throw InvalidArgument("sum: size mismatch");
  }
  Node n{OpKind::Sum};
  n.aux = parts_.size();
  n.aux_len = parts.size();
  parts_.insert(parts_.end(), parts.begin(), parts.end());
  const NodeId id = push(n, nodes_[parts[0]].len);
  for (NodeId p : parts) {
    for (std::size_t i = 0; i < nodes_[id].len; ++i) {
      values_[nodes_[id].off + i] += values_[nodes_[p].off + i];
    }
  }
  return id;
}

// ---------------------------------------------------------------- backward

void Tape::backward(NodeId out, ParamStore& grads, std::span<const double> seed) const {
  check(out);
  if (&grads != store_) throw InvalidArgument("backward: gradient store is not the tape's store");
  if (!seed.empty() && seed.size() != nodes_[out].len) throw InvalidArgument("backward: seed size mismatch");
  std::vector<double> g(values_.size(), 0.0);
  for (std::size_t i = 0; i < nodes_[out].len; ++i) {
    g[nodes_[out].off + i] = seed.empty() ? 1.0 : seed[i];
  }
  sweep(g, out, grads);
}

void Tape::backward(std::span<const Seed> seeds, ParamStore& grads) const {
  if (nodes_.empty()) throw InvalidState("backward called before any forward op");
  if (&grads != store_) throw InvalidArgument("backward: gradient store is not the tape's store");
  if (seeds.empty()) return;
  std::vector<double> g(values_.size(), 0.0);
  NodeId last = 0;
  for (const Seed& s : seeds) {
    check(s.node);
    if (nodes_[s.node].len != 1) throw InvalidArgument("backward: seeded node is not scalar");
    g[nodes_[s.node].off] += s.grad;
    last = std::max(last, s.node);
  }
  sweep(g, last, grads);
}

void Tape::sweep(std::vector<double>& g, NodeId last, ParamStore& store) const {
  const auto fault = testing::backward_fault();
  for (std::size_t idx = last + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    std::span<double> gout(g.data() + n.off, n.len);
    if (std::all_of(gout.begin(), gout.end(), [](double v) { return v == 0.0; })) continue;
    if (fault && *fault == n.kind) {
      for (double& v : gout) v *= kFaultScale;
    }
    switch (n.kind) {
      case OpKind::Constant:
        break;
      case OpKind::Param: {
        auto& pg = store[n.p0].grad;
        for (std::size_t i = 0; i < n.len; ++i) pg[i] += gout[i];
        break;
      }
      case OpKind::Dense: {
        Param& W = store[n.p0];
        const Node& x = nodes_[n.a];
        std::span<const double> xv(values_.data() + x.off, x.len);
        simd::ger_acc(W.grad, W.rows(), W.cols(), gout, xv);
        if (n.has_bias) {
          auto& bg = store[n.p1].grad;
          for (std::size_t i = 0; i < n.len; ++i) bg[i] += gout[i];
        }
        simd::gemv_t_acc(W.value, W.rows(), W.cols(), gout,
                         std::span<double>(g.data() + x.off, x.len));
        break;
      }
      case OpKind::Embedding: {
        Param& E = store[n.p0];
        double* row = E.grad.data() + n.index * E.cols();
        for (std::size_t i = 0; i < n.len; ++i) row[i] += gout[i];
        break;
      }
      case OpKind::Add: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        for (std::size_t i = 0; i < n.len; ++i) {
          g[a.off + i] += gout[i];
          g[b.off + i] += gout[i];
        }
        break;
      }
      case OpKind::Mul: {
        const Node& a = nodes_[n.a];
        const Node& b = nodes_[n.b];
        for (std::size_t i = 0; i < n.len; ++i) {
          const double av = values_[a.off + i];
          const double bv = values_[b.off + i];
          g[a.off + i] += gout[i] * bv;
          g[b.off + i] += gout[i] * av;
        }
        break;
      }
      case OpKind::Sigmoid: {
        const Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < n.len; ++i) {
          const double y = values_[n.off + i];
          g[a.off + i] += gout[i] * y * (1.0 - y);
        }
        break;
      }
      case OpKind::Tanh: {
        const Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < n.len; ++i) {
          const double y = values_[n.off + i];
          g[a.off + i] += gout[i] * (1.0 - y * y);
        }
        break;
      }
      case OpKind::Slice: {
        const Node& a = nodes_[n.a];
        for (std::size_t i = 0; i < n.len; ++i) g[a.off + n.index + i] += gout[i];
        break;
      }
      case OpKind::SoftmaxXent: {
        const Node& a = nodes_[n.a];
        const double k = gout[0] * n.s0;
        for (std::size_t i = n.index; i < n.aux_len; ++i) {
          const double p = values_[n.aux + i];
          g[a.off + i] += k * (i == n.p0 ? p - 1.0 : p);
        }
        break;
      }
      case OpKind::SquaredError: {
        const Node& a = nodes_[n.a];
        g[a.off] += gout[0] * n.s0 * 2.0 * (values_[a.off] - n.s1);
        break;
      }
      case OpKind::Sum: {
        for (std::size_t j = 0; j < n.aux_len; ++j) {
          const Node& p = nodes_[parts_[n.aux + j]];
          for (std::size_t i = 0; i < n.len; ++i) g[p.off + i] += gout[i];
        }
        break;
      }
    }
  }
}

}  // namespace acseq::core
