#pragma once

// Actor (policy LSTM + softmax output) and critic (value LSTM + scalar head).
// Both condition on the context vector only through the initial hidden
// state h0 = W_ctx ctx + b_ctx; the first input token is BOS.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "acseq/params.hpp"
#include "acseq/tape.hpp"
#include "acseq/token.hpp"

namespace acseq {
class Rng;
}

namespace acseq::models {

using ContextVector = std::vector<double>;

struct ModelDims {
  std::size_t vocab = 0;
  std::size_t embed = 64;
  std::size_t hidden = 64;
  std::size_t context = 0;
  /// Output ids below this are never produced (PAD and BOS by default).
  std::size_t min_output = kEos;

  nlohmann::json to_json() const;
  static ModelDims from_json(const nlohmann::json& j);
  bool operator==(const ModelDims&) const = default;
};

struct DecoderState {
  core::NodeId h = 0;
  core::NodeId c = 0;
};

/// Embedding table, LSTM cell and context projection under one name prefix.
class LstmCore {
 public:
  LstmCore() = default;
  LstmCore(core::ParamStore& store, const std::string& prefix, const ModelDims& dims, Rng* rng);

  DecoderState init(core::Tape& tape, std::span<const double> ctx) const;
  DecoderState step(core::Tape& tape, DecoderState s, TokenId input) const;

 private:
  ModelDims dims_;
  core::ParamId embed_ = 0, w_ih_ = 0, w_hh_ = 0, b_ = 0, w_ctx_ = 0, b_ctx_ = 0;
};

struct StepDistribution {
  std::vector<double> probs;
  std::vector<double> logprobs;
  DecoderState next;
  core::NodeId logits = 0;
};

class PolicyNet {
 public:
  /// Weights U(-0.08, 0.08) from `seed`, biases zero.
  PolicyNet(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  core::ParamStore& params() { return store_; }
  const core::ParamStore& params() const { return store_; }

  /// h0 from the context; throws InvalidArgument on a dimension mismatch.
  DecoderState init_state(core::Tape& tape, std::span<const double> ctx) const;
  /// Consumes `prev` (a_t) and returns pi(. | s_t) with the advanced state.
  StepDistribution step(core::Tape& tape, DecoderState s, TokenId prev) const;

 private:
  ModelDims dims_;
  core::ParamStore store_;
  LstmCore core_;
  core::ParamId w_out_ = 0, b_out_ = 0;
};

class ValueNet {
 public:
  ValueNet(const ModelDims& dims, std::uint64_t seed);

  const ModelDims& dims() const { return dims_; }
  core::ParamStore& params() { return store_; }
  const core::ParamStore& params() const { return store_; }

  DecoderState init_state(core::Tape& tape, std::span<const double> ctx) const;
  /// Consumes a_t; returns the advanced state and the node holding V(s_t).
  std::pair<DecoderState, core::NodeId> step(core::Tape& tape, DecoderState s, TokenId input) const;

  /// V(s_t) for the state after consuming BOS and the whole prefix.
  double value_of_prefix(std::span<const double> ctx, std::span<const TokenId> prefix) const;
  /// V(s_0)..V(s_{T-1}) for the states at which actions[0..T-1] were taken.
  std::vector<double> values_along(std::span<const double> ctx,
                                   std::span<const TokenId> actions) const;

 private:
  ModelDims dims_;
  core::ParamStore store_;
  LstmCore core_;
  core::ParamId w_v_ = 0, b_v_ = 0;
};

/// Inverse CDF on a single uniform draw.
TokenId sample_token(const StepDistribution& dist, Rng& rng);
/// Argmax with ties broken by the smallest id.
TokenId argmax_token(std::span<const double> probs);

/// Argmax decoding until EOS or `max_len` tokens. With `stop_at_eos` off
/// the horizon is fixed at `max_len` and EOS is an ordinary action.
TokenSeq greedy_decode(const PolicyNet& net, std::span<const double> ctx, std::size_t max_len,
                       bool stop_at_eos = true);

}  // namespace acseq::models
