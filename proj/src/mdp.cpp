#include "acseq/mdp.hpp"

#include <cmath>
#include <memory>

#include "acseq/errors.hpp"
#include "acseq/rng.hpp"

namespace acseq::mdp {

double Episode::reward() const {
  if (!reward_set_) throw InvalidState("episode has no terminal reward yet");
  return reward_;
}

void Episode::set_reward(double r) {
  if (reward_set_) throw InvalidState("terminal reward already set");
  reward_ = r;
  reward_set_ = true;
}

nlohmann::json Episode::to_json() const {
  nlohmann::json j;
  j["ctx"] = ctx;
  j["actions"] = actions.ids;
  j["terminated"] = actions.terminated;
  j["logprobs"] = logprobs;
  j["values"] = values;
  j["reward"] = reward_set_ ? nlohmann::json(reward_) : nlohmann::json(nullptr);
  j["gamma"] = gamma;
  return j;
}

Episode rollout(const models::PolicyNet& actor, const models::ValueNet* critic,
                std::span<const double> ctx, const RewardFn& reward, const RolloutOptions& opts,
                Rng& rng) {
  if (opts.max_len == 0) throw InvalidArgument("rollout: max_len must be >= 1");
  Episode ep;
  ep.ctx.assign(ctx.begin(), ctx.end());
  ep.gamma = opts.gamma;

  core::Tape tape(actor.params());
  models::DecoderState s = actor.init_state(tape, ctx);
  TokenId prev = kBos;
  for (std::size_t t = 0; t < opts.max_len; ++t) {
    const models::StepDistribution dist = actor.step(tape, s, prev);
    const TokenId tok = models::sample_token(dist, rng);
    ep.actions.ids.push_back(tok);
    ep.logprobs.push_back(dist.logprobs[tok]);
    if (opts.stop_at_eos && tok == kEos) {
      ep.actions.terminated = true;
      break;
    }
    s = dist.next;
    prev = tok;
  }
  ep.values = critic ? critic->values_along(ctx, ep.actions.ids)
                     : std::vector<double>(ep.length(), 0.0);
  ep.set_reward(reward(ep.actions));
  return ep;
}

std::vector<double> reward_vector(const Episode& ep) {
  std::vector<double> r(ep.length(), 0.0);
  if (!r.empty()) r.back() = ep.reward();
  return r;
}

std::vector<double> terminal_q(const Episode& ep) {
  const std::size_t T = ep.length();
  const double rT = ep.reward();
  std::vector<double> q(T);
  for (std::size_t t = 0; t < T; ++t) {
    q[t] = std::pow(ep.gamma, static_cast<double>(T - t - 1)) * rT;
  }
  return q;
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  const std::size_t T = rewards.size();
  std::vector<double> q(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0.0;
    for (std::size_t l = 0; t + l + 1 <= T; ++l) {
      acc += std::pow(gamma, static_cast<double>(l)) * rewards[t + l];
    }
    q[t] = acc;
  }
  return q;
}

std::vector<double> lambda_returns(std::span<const double> rewards,
                                   std::span<const double> values, double gamma, double lambda) {
  const std::size_t T = rewards.size();
  if (values.size() != T) throw InvalidArgument("lambda_returns: values and rewards differ in length");
  std::vector<double> q(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t N = T - t;
    double g = 0.0;  // discounted reward sum of the first n steps
    double out = 0.0;
    for (std::size_t n = 1; n <= N; ++n) {
      g += std::pow(gamma, static_cast<double>(n - 1)) * rewards[t + n - 1];
      if (n < N) {
        const double gn = g + std::pow(gamma, static_cast<double>(n)) * values[t + n];
        out += (1.0 - lambda) * std::pow(lambda, static_cast<double>(n - 1)) * gn;
      } else {
        out += std::pow(lambda, static_cast<double>(N - 1)) * g;
      }
    }
    q[t] = out;
  }
  return q;
}

TDTargets q_targets(const Episode& ep) {
  if (!ep.has_reward()) throw InvalidState("q_targets: episode is not complete");
  TDTargets out;
  out.q = terminal_q(ep);
  const std::vector<double> rewards = reward_vector(ep);
  if (discounted_returns(rewards, ep.gamma) != out.q) {
    throw InternalError("terminal-reward Q targets disagree with the discounted return");
  }
  out.advantages = advantages(ep, out);
  return out;
}

std::vector<double> advantages(const Episode& ep, const TDTargets& targets) {
  if (targets.q.size() != ep.values.size()) {
    throw InvalidState("advantages: values and Q targets are not aligned");
  }
  std::vector<double> a(targets.q.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = targets.q[t] - ep.values[t];
  return a;
}

double terminal_reward(const TokenSeq& actions, std::span<const TokenSeq> refs,
                       metrics::Metric metric, const metrics::DocFreqTable* df) {
  if (metric == metrics::Metric::CiderD && (!df || df->empty())) {
    throw InvalidArgument("terminal_reward: CIDEr-D needs a document-frequency table");
  }
  std::shared_ptr<const metrics::DocFreqTable> table;
  if (metric == metrics::Metric::CiderD) table = std::make_shared<const metrics::DocFreqTable>(*df);
  return metrics::Scorer(metric, table)(actions, refs);
}

}  // namespace acseq::mdp
