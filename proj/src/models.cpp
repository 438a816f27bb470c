#include "acseq/models.hpp"

#include <cmath>

#include "acseq/errors.hpp"
#include "acseq/rng.hpp"

namespace acseq::models {

using core::Init;
using core::NodeId;
using core::Tape;

nlohmann::json ModelDims::to_json() const {
  return {{"vocab", vocab},   {"embed", embed},           {"hidden", hidden},
          {"context", context}, {"min_output", min_output}};
}

ModelDims ModelDims::from_json(const nlohmann::json& j) {
  ModelDims d;
  d.vocab = j.at("vocab").get<std::size_t>();
  d.embed = j.at("embed").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.context = j.at("context").get<std::size_t>();
  d.min_output = j.at("min_output").get<std::size_t>();
  return d;
}

namespace {

std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

void validate(const ModelDims& d) {
  if (d.vocab == 0 || d.embed == 0 || d.hidden == 0 || d.context == 0) {
    throw InvalidArgument("model dimensions must be positive");
  }
  if (d.min_output >= d.vocab) throw InvalidArgument("min_output must be below the vocabulary size");
}

}  // namespace

LstmCore::LstmCore(core::ParamStore& store, const std::string& prefix, const ModelDims& dims,
                   Rng* rng)
    : dims_(dims) {
  const auto d = u32(dims.hidden);
  embed_ = store.add(prefix + ".embed", {u32(dims.vocab), u32(dims.embed)}, Init::Uniform, rng);
  w_ih_ = store.add(prefix + ".lstm.w_ih", {4 * d, u32(dims.embed)}, Init::Uniform, rng);
  w_hh_ = store.add(prefix + ".lstm.w_hh", {4 * d, d}, Init::Uniform, rng);
  b_ = store.add(prefix + ".lstm.b", {4 * d}, Init::Zeros);
  w_ctx_ = store.add(prefix + ".ctx.w", {d, u32(dims.context)}, Init::Uniform, rng);
  b_ctx_ = store.add(prefix + ".ctx.b", {d}, Init::Zeros);
}

DecoderState LstmCore::init(Tape& tape, std::span<const double> ctx) const {
  if (ctx.size() != dims_.context) {
    throw InvalidArgument("context vector has dimension " + std::to_string(ctx.size()) +
                          ", expected " + std::to_string(dims_.context));
  }
  const NodeId x = tape.constant(ctx);
  const std::vector<double> zeros(dims_.hidden, 0.0);
  return {tape.dense(x, w_ctx_, b_ctx_), tape.constant(zeros)};
}

DecoderState LstmCore::step(Tape& tape, DecoderState s, TokenId input) const {
  if (input >= dims_.vocab) throw InvalidArgument("token id out of vocabulary range");
  const std::size_t d = dims_.hidden;
  const NodeId x = tape.embedding(embed_, input);
  const NodeId gates = tape.add(tape.dense(x, w_ih_, b_), tape.dense(s.h, w_hh_));
  const NodeId i = tape.sigmoid(tape.slice(gates, 0, d));
  const NodeId f = tape.sigmoid(tape.slice(gates, d, d));
  const NodeId g = tape.tanh(tape.slice(gates, 2 * d, d));
  const NodeId o = tape.sigmoid(tape.slice(gates, 3 * d, d));
  const NodeId c = tape.add(tape.mul(f, s.c), tape.mul(i, g));
  const NodeId h = tape.mul(o, tape.tanh(c));
  return {h, c};
}

// ------------------------------------------------------------------ actor

PolicyNet::PolicyNet(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  validate(dims);
  Rng rng(seed);
  core_ = LstmCore(store_, "actor", dims, &rng);
  w_out_ = store_.add("actor.out.w", {u32(dims.vocab), u32(dims.hidden)}, Init::Uniform, &rng);
  b_out_ = store_.add("actor.out.b", {u32(dims.vocab)}, Init::Zeros);
}

DecoderState PolicyNet::init_state(Tape& tape, std::span<const double> ctx) const {
  return core_.init(tape, ctx);
}

StepDistribution PolicyNet::step(Tape& tape, DecoderState s, TokenId prev) const {
  StepDistribution out;
  out.next = core_.step(tape, s, prev);
  out.logits = tape.dense(out.next.h, w_out_, b_out_);
  const auto logits = tape.value(out.logits);
  out.logprobs = core::log_softmax(logits, dims_.min_output);
  out.probs.resize(out.logprobs.size());
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    out.probs[i] = i < dims_.min_output ? 0.0 : std::exp(out.logprobs[i]);
  }
  return out;
}

// ----------------------------------------------------------------- critic

ValueNet::ValueNet(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
  validate(dims);
  Rng rng(seed);
  core_ = LstmCore(store_, "critic", dims, &rng);
  w_v_ = store_.add("critic.head.w", {1, u32(dims.hidden)}, Init::Uniform, &rng);
  b_v_ = store_.add("critic.head.b", {1}, Init::Zeros);
}

DecoderState ValueNet::init_state(Tape& tape, std::span<const double> ctx) const {
  return core_.init(tape, ctx);
}

std::pair<DecoderState, NodeId> ValueNet::step(Tape& tape, DecoderState s, TokenId input) const {
  const DecoderState next = core_.step(tape, s, input);
  return {next, tape.dense(next.h, w_v_, b_v_)};
}

double ValueNet::value_of_prefix(std::span<const double> ctx,
                                 std::span<const TokenId> prefix) const {
  Tape tape(store_);
  auto [s, v] = step(tape, init_state(tape, ctx), kBos);
  for (TokenId t : prefix) std::tie(s, v) = step(tape, s, t);
  return tape.scalar(v);
}

std::vector<double> ValueNet::values_along(std::span<const double> ctx,
                                           std::span<const TokenId> actions) const {
  std::vector<double> out;
  out.reserve(actions.size());
  Tape tape(store_);
  DecoderState s = init_state(tape, ctx);
  TokenId input = kBos;
  for (TokenId a : actions) {
    auto [next, v] = step(tape, s, input);
    out.push_back(tape.scalar(v));
    s = next;
    input = a;
  }
  return out;
}

// --------------------------------------------------------------- decoding

TokenId sample_token(const StepDistribution& dist, Rng& rng) {
  const double u = rng.uniform();
  double cdf = 0.0;
  TokenId last_nonzero = 0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    cdf += dist.probs[i];
    last_nonzero = static_cast<TokenId>(i);
    if (u < cdf) return last_nonzero;
  }
  // Rounding left the CDF just below 1.
  return last_nonzero;
}

TokenId argmax_token(std::span<const double> probs) {
  TokenId best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = static_cast<TokenId>(i);
  }
  return best;
}

TokenSeq greedy_decode(const PolicyNet& net, std::span<const double> ctx, std::size_t max_len,
                       bool stop_at_eos) {
  if (max_len == 0) throw InvalidArgument("greedy_decode: max_len must be >= 1");
  Tape tape(net.params());
  DecoderState s = net.init_state(tape, ctx);
  TokenSeq out;
  TokenId prev = kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    const StepDistribution dist = net.step(tape, s, prev);
    const TokenId tok = argmax_token(dist.probs);
    out.ids.push_back(tok);
    if (stop_at_eos && tok == kEos) {
      out.terminated = true;
      break;
    }
    s = dist.next;
    prev = tok;
  }
  return out;
}

}  // namespace acseq::models
