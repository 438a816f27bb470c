#pragma once

// Staged training: XE pretraining of the actor, critic pretraining against a
// frozen actor, joint actor-critic updates, and the self-critical baseline.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "acseq/adam.hpp"
#include "acseq/errors.hpp"
#include "acseq/mdp.hpp"
#include "acseq/metrics.hpp"
#include "acseq/models.hpp"
#include "acseq/synth.hpp"

namespace acseq::train {

// Values used for the full-scale captioning runs; recorded for reference.
inline constexpr std::size_t kReferenceBatch = 16;
inline constexpr double kReferenceCriticWeight = 0.5;
inline constexpr double kReferenceGamma = 1.0;
inline constexpr std::size_t kReferenceCriticPretrainIters = 2000;
inline constexpr double kReferenceLr = 5e-5;
inline constexpr double kReferenceDecayedLr = 5e-6;
inline constexpr std::size_t kReferenceDecayStep = 1'000'000;
inline constexpr std::size_t kReferenceHidden = 512;
inline constexpr std::size_t kReferenceVocab = 12000;

enum class Stage { Xe, CriticPretrain, ActorCritic, SelfCritical };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);

struct LrSchedule {
  double initial = 5e-5;
  std::size_t decay_step = std::numeric_limits<std::size_t>::max();
  double decayed = 5e-6;

  double at(std::size_t iter) const { return iter < decay_step ? initial : decayed; }
};

struct TrainConfig {
  Stage stage = Stage::Xe;
  std::size_t batch = kReferenceBatch;
  LrSchedule lr;
  double critic_weight = kReferenceCriticWeight;
  double gamma = kReferenceGamma;
  metrics::Metric reward = metrics::Metric::CiderD;
  std::size_t max_len = 16;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::size_t log_every = 10;
  double clip_norm = 5.0;
  std::size_t workers = 1;
  /// Wall-clock ms in the reward log; off keeps logs byte-reproducible.
  bool log_timing = false;

  /// Desk-scale defaults for a stage.
  static TrainConfig defaults(Stage s);
  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainExample {
  models::ContextVector ctx;
  std::vector<TokenSeq> refs;
  metrics::CiderD::Prepared prepared;  // filled for CIDEr-D rewards
};

/// Encoded examples with the reward scorer. The document-frequency table
/// is built from this corpus's references.
class TrainCorpus {
 public:
  TrainCorpus(std::vector<TrainExample> examples, metrics::Metric reward);
  static TrainCorpus from_records(const std::vector<data::CaptionRecord>& records,
                                  const data::Vocabulary& vocab, metrics::Metric reward);

  std::size_t size() const { return examples_.size(); }
  const TrainExample& operator[](std::size_t i) const { return examples_[i]; }
  std::size_t context_dim() const { return examples_.front().ctx.size(); }
  double reward(std::size_t i, const TokenSeq& candidate) const;
  const metrics::Scorer& scorer() const { return *scorer_; }
  std::shared_ptr<const metrics::DocFreqTable> doc_freq() const { return df_; }

 private:
  std::vector<TrainExample> examples_;
  std::shared_ptr<const metrics::DocFreqTable> df_;
  std::shared_ptr<const metrics::Scorer> scorer_;
};

class RewardLog {
 public:
  struct Row {
    std::size_t iter = 0;
    std::optional<double> mean_reward;
    std::optional<double> critic_loss;
    std::optional<double> xe_loss;
    double ms = 0.0;
  };

  static constexpr const char* kHeader = "iter,mean_reward,critic_loss,xe_loss,ms";

  /// Throws InvalidArgument unless iteration indices strictly increase.
  void append(const Row& row);
  const std::vector<Row>& rows() const { return rows_; }
  std::string to_csv() const;

 private:
  std::vector<Row> rows_;
};

/// Divergence detected in an update, with the batch that produced it.
class EpisodesDiverged : public TrainingDiverged {
 public:
  EpisodesDiverged(std::string what, std::string where, nlohmann::json episodes)
      : TrainingDiverged(std::move(what), std::move(where)), episodes_(std::move(episodes)) {}
  const nlohmann::json& episodes() const { return episodes_; }

 private:
  nlohmann::json episodes_;
};

// ------------------------------------------------------------- gradients

struct XeItem {
  std::span<const double> ctx;
  TokenSeq target;  // body followed by EOS
};

/// Mean over items of the summed per-token NLL under teacher forcing;
/// gradients are accumulated into the actor's store. Targets longer than
/// `max_len` are truncated.
double accumulate_xe(models::PolicyNet& actor, std::span<const XeItem> items, std::size_t max_len);

/// Surrogate -(1/B) sum_ep sum_t A_t log pi(a_{t+1}|s_t); advantages are
/// constants. Accumulates into the actor's store and returns the surrogate.
double accumulate_policy_gradient(models::PolicyNet& actor, std::span<const mdp::Episode> episodes,
                                  std::span<const std::vector<double>> advantages);

/// Runs the critic over each episode (writing `values`) and accumulates
/// weight * mean_t (V(s_t) - Q_t)^2. Returns the unweighted mean squared error.
double accumulate_critic_regression(models::ValueNet& critic, std::span<mdp::Episode> episodes,
                                    double weight);

/// Samples one episode per batch slot; slot i draws from its own seed so the
/// result does not depend on `workers`.
std::vector<mdp::Episode> collect_episodes(const models::PolicyNet& actor,
                                           const TrainCorpus& corpus,
                                           std::span<const std::size_t> batch,
                                           const mdp::RolloutOptions& opts, std::uint64_t seed,
                                           std::size_t workers);

// ------------------------------------------------------------------ steps

double xe_step(models::PolicyNet& actor, core::AdamState& opt, const TrainCorpus& corpus,
               std::span<const std::size_t> batch, const TrainConfig& cfg, std::uint64_t seed);

struct CriticStats {
  double loss = 0.0;  // mean squared error over all steps
  double mean_reward = 0.0;
  std::vector<mdp::Episode> episodes;
};

/// Regression of V onto the Monte-Carlo targets of a frozen actor. Throws
/// InternalError if the actor's gradients are nonzero afterwards.
CriticStats critic_step(const models::PolicyNet& actor, models::ValueNet& critic, core::AdamState& opt,
                   const TrainCorpus& corpus, std::span<const std::size_t> batch,
                   const TrainConfig& cfg, std::uint64_t seed);

struct AcStats {
  double mean_reward = 0.0;
  double actor_grad_norm = 0.0;
  double critic_loss = 0.0;
  std::vector<mdp::Episode> episodes;
  std::vector<std::vector<double>> advantages;
};

/// Critic regression update (weighted) then actor update, one Adam step each.
AcStats ac_step(models::PolicyNet& actor, models::ValueNet& critic, core::AdamState& actor_opt,
                core::AdamState& critic_opt, const TrainCorpus& corpus,
                std::span<const std::size_t> batch, const TrainConfig& cfg, std::uint64_t seed);

struct ScStats {
  double mean_reward = 0.0;
  double mean_greedy_reward = 0.0;
  double actor_grad_norm = 0.0;
  std::vector<mdp::Episode> episodes;
  std::vector<std::vector<double>> advantages;
};

/// REINFORCE with the greedy-decode reward as a sentence-level baseline.
ScStats self_critical_step(models::PolicyNet& actor, core::AdamState& opt,
                           const TrainCorpus& corpus, std::span<const std::size_t> batch,
                           const TrainConfig& cfg, std::uint64_t seed);

// ------------------------------------------------------------------ stages

struct StageResult {
  models::PolicyNet actor;
  std::optional<models::ValueNet> critic;
  RewardLog log;
};

struct StageHooks {
  /// Called with the episodes of every logged iteration.
  std::function<void(std::size_t iter, std::span<const mdp::Episode>)> on_episodes;
};

/// Runs one stage to `cfg.iterations`. XE initializes a fresh actor from
/// `dims` unless one is given; later stages need their prerequisites and
/// throw InvalidState naming the missing stage.
StageResult run_stage(const TrainConfig& cfg, const TrainCorpus& corpus,
                      std::optional<models::PolicyNet> actor,
                      std::optional<models::ValueNet> critic, const models::ModelDims& dims,
                      const StageHooks& hooks = {});

/// Batch indices for one iteration.
std::vector<std::size_t> sample_batch(std::size_t corpus_size, std::size_t batch,
                                      std::uint64_t seed);

/// Greedy-decodes every record and scores against its references; the
/// CIDEr-D table is built from these records.
struct EvalResult {
  metrics::MetricReport report;
  std::vector<TokenSeq> captions;
};
EvalResult evaluate(const models::PolicyNet& actor, const std::vector<data::CaptionRecord>& records,
                    const data::Vocabulary& vocab, std::size_t max_len,
                    std::span<const metrics::Metric> metrics);

}  // namespace acseq::train
