#pragma once

// Reverse-mode differentiation over a fixed set of vector ops. A Tape
// evaluates eagerly and records each op; backward() replays the record in
// reverse and accumulates parameter gradients into the store.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "acseq/params.hpp"
#include "acseq/token.hpp"

namespace acseq::core {

using NodeId = std::uint32_t;

enum class OpKind : std::uint8_t {
  Constant,
  Param,
  Dense,
  Embedding,
  Add,
  Mul,
  Sigmoid,
  Tanh,
  Slice,
  SoftmaxXent,
  SquaredError,
  Sum,
};

std::string_view op_name(OpKind k);
std::optional<OpKind> parse_op(std::string_view name);

/// out = W x + b, W given row-major with `rows` x `cols`.
std::vector<double> dense_forward(std::span<const double> x, std::span<const double> w,
                                  std::size_t rows, std::size_t cols,
                                  std::span<const double> b = {});

/// Max-subtracted softmax. Entries below `min_allowed` are masked to 0.
/// Throws InvalidArgument on NaN input.
std::vector<double> softmax(std::span<const double> logits, std::size_t min_allowed = 0);
std::vector<double> log_softmax(std::span<const double> logits, std::size_t min_allowed = 0);

class Tape {
 public:
  struct Seed {
    NodeId node;
    double grad;
  };

  explicit Tape(const ParamStore& store) : store_(&store) {}

  NodeId constant(std::span<const double> v);
  /// The whole parameter, flattened, as a differentiable vector.
  NodeId param(ParamId p);
  NodeId dense(NodeId x, ParamId w, std::optional<ParamId> b = std::nullopt);
  NodeId embedding(ParamId table, TokenId row);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId slice(NodeId a, std::size_t offset, std::size_t len);
  /// Scalar -weight * log softmax(logits)[target], softmax masked below
  /// `min_allowed`.
  NodeId softmax_xent(NodeId logits, TokenId target, double weight = 1.0,
                      std::size_t min_allowed = 0);
  /// Scalar weight * (pred[0] - target)^2.
  NodeId squared_error(NodeId pred, double target, double weight = 1.0);
  /// Elementwise sum of same-sized nodes.
  NodeId sum(std::span<const NodeId> parts);

  std::span<const double> value(NodeId n) const;
  double scalar(NodeId n) const { return value(n)[0]; }
  /// Probabilities cached by a softmax_xent node.
  std::span<const double> probs(NodeId xent) const;

  std::size_t node_count() const { return nodes_.size(); }
  const ParamStore& store() const { return *store_; }

  /// Accumulates d(seed . out)/d(param) into `grads`, which must be the store
  /// this tape reads from. An empty seed means all ones.
  void backward(NodeId out, ParamStore& grads, std::span<const double> seed = {}) const;
  /// One sweep over several scalar outputs.
  void backward(std::span<const Seed> seeds, ParamStore& grads) const;

 private:
  struct Node {
    OpKind kind;
    NodeId a = 0;
    NodeId b = 0;
    ParamId p0 = 0;
    ParamId p1 = 0;
    bool has_bias = false;
    std::size_t off = 0;  // into values_
    std::size_t len = 0;
    std::size_t aux = 0;  // into values_ (softmax probs) or parts_
    std::size_t aux_len = 0;
    std::size_t index = 0;  // slice offset, token, or min_allowed
    double s0 = 0.0;        // weight
    double s1 = 0.0;        // target
  };

  NodeId push(Node n, std::size_t len);
  void check(NodeId n) const;
  void sweep(std::vector<double>& grads, NodeId last, ParamStore& store) const;

  const ParamStore* store_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<NodeId> parts_;
};

namespace testing {
/// Corrupts the backward rule of one op kind (negative-control harness).
void set_backward_fault(std::optional<OpKind> kind);
std::optional<OpKind> backward_fault();
}  // namespace testing

}  // namespace acseq::core
