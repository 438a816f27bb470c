#pragma once

// Caption generation as a finite MDP: the state s_t is the context plus the
// tokens a_0..a_t, every reward before termination is zero and the terminal
// reward is a sequence metric of the sampled caption.

#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "acseq/metrics.hpp"
#include "acseq/models.hpp"
#include "acseq/token.hpp"

namespace acseq {
class Rng;
}

namespace acseq::mdp {

struct Episode {
  models::ContextVector ctx;
  TokenSeq actions;               // a_1..a_T
  std::vector<double> logprobs;   // log pi(a_{t+1} | s_t), t = 0..T-1
  std::vector<double> values;     // V(s_t), t = 0..T-1
  double gamma = 1.0;

  std::size_t length() const { return actions.ids.size(); }
  bool has_reward() const { return reward_set_; }
  /// Terminal reward r_T; throws InvalidState when read before it is set.
  double reward() const;
  /// Sets r_T; throws InvalidState on a second call.
  void set_reward(double r);

  nlohmann::json to_json() const;

 private:
  double reward_ = 0.0;
  bool reward_set_ = false;
};

struct TDTargets {
  std::vector<double> q;           // Q(s_t, a_{t+1})
  std::vector<double> advantages;  // Q - V(s_t)
};

using RewardFn = std::function<double(const TokenSeq&)>;

struct RolloutOptions {
  std::size_t max_len = 16;
  /// When false the horizon is exactly max_len and EOS is an ordinary token.
  bool stop_at_eos = true;
  double gamma = 1.0;
};

/// Samples a_1..a_T from the actor until EOS or max_len, records log-probs,
/// critic values (zeros when `critic` is null) and the terminal reward.
/// Unterminated sequences at max_len are scored as they stand.
Episode rollout(const models::PolicyNet& actor, const models::ValueNet* critic,
                std::span<const double> ctx, const RewardFn& reward, const RolloutOptions& opts,
                Rng& rng);

/// The reward vector (r_1..r_T) = (0, ..., 0, r_T).
std::vector<double> reward_vector(const Episode& ep);

/// Q_t = gamma^(T-t-1) r_T.
std::vector<double> terminal_q(const Episode& ep);

/// Q_t = sum_{l=0}^{T-t-1} gamma^l r_{t+l+1} over an arbitrary reward vector.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

/// Forward-view TD(lambda) return truncated at the episode end:
/// (1-lambda) sum_{n<N} lambda^(n-1) G^n_t + lambda^(N-1) G^N_t with N = T-t.
/// `values[t]` is V(s_t); lambda = 1 gives the Monte Carlo return.
std::vector<double> lambda_returns(std::span<const double> rewards,
                                   std::span<const double> values, double gamma, double lambda);

/// Q targets by the closed form, cross-checked against the generic
/// discounted sum (InternalError if they differ); advantages Q - V.
TDTargets q_targets(const Episode& ep);

/// A_t = Q_t - V(s_t).
std::vector<double> advantages(const Episode& ep, const TDTargets& targets);

/// Metric score of the sampled caption against the references. CIDEr-D
/// requires `df` (InvalidArgument otherwise).
double terminal_reward(const TokenSeq& actions, std::span<const TokenSeq> refs,
                       metrics::Metric metric, const metrics::DocFreqTable* df);

}  // namespace acseq::mdp
