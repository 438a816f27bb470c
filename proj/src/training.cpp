#include "acseq/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

#include "acseq/errors.hpp"
#include "acseq/log.hpp"
#include "acseq/rng.hpp"

namespace acseq::train {

using core::NodeId;
using core::Tape;
using mdp::Episode;

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Xe: return "xe";
    case Stage::CriticPretrain: return "critic-pretrain";
    case Stage::ActorCritic: return "actor-critic";
    case Stage::SelfCritical: return "self-critical";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : {Stage::Xe, Stage::CriticPretrain, Stage::ActorCritic, Stage::SelfCritical}) {
    if (stage_name(st) == s) return st;
  }
  throw InvalidArgument("unknown stage: " + std::string(s));
}

TrainConfig TrainConfig::defaults(Stage s) {
  TrainConfig c;
  c.stage = s;
  switch (s) {
    case Stage::Xe:
      c.batch = 32;
      c.lr = {5e-3, 4000, 5e-4};
      c.iterations = 5000;
      break;
    case Stage::CriticPretrain:
      c.lr = {1e-3, std::numeric_limits<std::size_t>::max(), 1e-3};
      c.iterations = kReferenceCriticPretrainIters;
      break;
    case Stage::ActorCritic:
    case Stage::SelfCritical:
      c.lr = {1e-3, 4000, 1e-4};
      c.iterations = 5000;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (batch == 0) throw InvalidArgument("batch size must be >= 1");
  if (!(critic_weight >= 0.0)) throw InvalidArgument("critic weight must be >= 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must be in [0, 1]");
  if (max_len == 0) throw InvalidArgument("max length must be >= 1");
  if (log_every == 0) throw InvalidArgument("log interval must be >= 1");
  if (workers == 0) throw InvalidArgument("workers must be >= 1");
  if (!(lr.initial > 0.0) || !(lr.decayed > 0.0)) throw InvalidArgument("learning rates must be > 0");
  if (!(clip_norm > 0.0)) throw InvalidArgument("clip norm must be > 0");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["stage"] = stage_name(stage);
  j["batch"] = batch;
  j["lr"] = {{"initial", lr.initial}, {"decay_step", lr.decay_step}, {"decayed", lr.decayed}};
  j["critic_weight"] = critic_weight;
  j["gamma"] = gamma;
  j["reward"] = metrics::metric_name(reward);
  j["max_len"] = max_len;
  j["iterations"] = iterations;
  j["seed"] = seed;
  j["log_every"] = log_every;
  j["clip_norm"] = clip_norm;
  return j;
}

// ----------------------------------------------------------------- corpus

TrainCorpus::TrainCorpus(std::vector<TrainExample> examples, metrics::Metric reward)
    : examples_(std::move(examples)) {
  if (examples_.empty()) throw InvalidArgument("training corpus is empty");
  const std::size_t dim = examples_.front().ctx.size();
  std::vector<std::vector<TokenSeq>> refs;
  refs.reserve(examples_.size());
  for (const auto& ex : examples_) {
    if (ex.refs.empty()) throw InvalidArgument("training example without references");
    if (ex.ctx.size() != dim || dim == 0) throw InvalidArgument("context dimensions differ");
    refs.push_back(ex.refs);
  }
  df_ = std::make_shared<const metrics::DocFreqTable>(metrics::build_doc_freq(refs));
  scorer_ = std::make_shared<const metrics::Scorer>(reward, df_);
  if (const auto* cider = scorer_->cider()) {
    for (auto& ex : examples_) ex.prepared = cider->prepare(ex.refs);
  }
}

TrainCorpus TrainCorpus::from_records(const std::vector<data::CaptionRecord>& records,
                                      const data::Vocabulary& vocab, metrics::Metric reward) {
  std::vector<TrainExample> ex;
  ex.reserve(records.size());
  for (const auto& r : records) {
    ex.push_back({r.context, data::encode_refs(r, vocab), {}});
  }
  return TrainCorpus(std::move(ex), reward);
}

double TrainCorpus::reward(std::size_t i, const TokenSeq& candidate) const {
  const TrainExample& ex = examples_.at(i);
  return (*scorer_)(candidate, ex.refs, ex.prepared.empty() ? nullptr : &ex.prepared);
}

// -------------------------------------------------------------------- log

void RewardLog::append(const Row& row) {
  if (!rows_.empty() && row.iter <= rows_.back().iter) {
    throw InvalidArgument("reward log iterations must strictly increase");
  }
  rows_.push_back(row);
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace

std::string RewardLog::to_csv() const {
  std::string out = kHeader;
  out.push_back('\n');
  for (const Row& r : rows_) {
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", r.ms);
    out += std::to_string(r.iter) + "," + fmt_opt(r.mean_reward) + "," + fmt_opt(r.critic_loss) +
           "," + fmt_opt(r.xe_loss) + "," + ms + "\n";
  }
  return out;
}

// -------------------------------------------------------------- gradients

double accumulate_xe(models::PolicyNet& actor, std::span<const XeItem> items, std::size_t max_len) {
  if (items.empty()) throw InvalidArgument("accumulate_xe: empty batch");
  static std::atomic<bool> warned{false};
  const std::size_t min_out = actor.dims().min_output;
  const double w = 1.0 / static_cast<double>(items.size());
  double total = 0.0;
  for (const XeItem& item : items) {
    std::span<const TokenId> target(item.target.ids);
    if (target.size() > max_len) {
      if (!warned.exchange(true)) {
        spdlog::warn("reference of {} tokens truncated to max length {}", target.size(), max_len);
      }
      target = target.first(max_len);
    }
    Tape tape(actor.params());
    models::DecoderState s = actor.init_state(tape, item.ctx);
    TokenId prev = kBos;
    std::vector<Tape::Seed> seeds;
    seeds.reserve(target.size());
    for (TokenId y : target) {
      const models::StepDistribution dist = actor.step(tape, s, prev);
      const NodeId nll = tape.softmax_xent(dist.logits, y, 1.0, min_out);
      total += tape.scalar(nll);
      seeds.push_back({nll, w});
      s = dist.next;
      prev = y;
    }
    tape.backward(seeds, actor.params());
  }
  return total * w;
}

double accumulate_policy_gradient(models::PolicyNet& actor, std::span<const Episode> episodes,
                                  std::span<const std::vector<double>> advantages) {
  if (episodes.size() != advantages.size()) {
    throw InvalidArgument("accumulate_policy_gradient: one advantage vector per episode");
  }
  if (episodes.empty()) return 0.0;
  const std::size_t min_out = actor.dims().min_output;
  const double w = 1.0 / static_cast<double>(episodes.size());
  double surrogate = 0.0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    const std::vector<double>& adv = advantages[e];
    if (adv.size() != ep.length()) throw InvalidArgument("advantage length differs from episode");
    Tape tape(actor.params());
    models::DecoderState s = actor.init_state(tape, ep.ctx);
    TokenId prev = kBos;
    std::vector<Tape::Seed> seeds;
    seeds.reserve(ep.length());
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const TokenId a = ep.actions.ids[t];
      const models::StepDistribution dist = actor.step(tape, s, prev);
      // -A log pi = A * nll
      const NodeId nll = tape.softmax_xent(dist.logits, a, 1.0, min_out);
      surrogate += w * adv[t] * tape.scalar(nll);
      if (adv[t] != 0.0) seeds.push_back({nll, w * adv[t]});
      s = dist.next;
      prev = a;
    }
    if (!seeds.empty()) tape.backward(seeds, actor.params());
  }
  return surrogate;
}

double accumulate_critic_regression(models::ValueNet& critic, std::span<Episode> episodes,
                                    double weight) {
  std::size_t steps = 0;
  for (const Episode& ep : episodes) steps += ep.length();
  if (steps == 0) return 0.0;
  const double w = weight / static_cast<double>(steps);
  double sse = 0.0;
  for (Episode& ep : episodes) {
    if (ep.length() == 0) continue;
    const std::vector<double> q = mdp::terminal_q(ep);
    Tape tape(critic.params());
    models::DecoderState s = critic.init_state(tape, ep.ctx);
    ep.values.assign(ep.length(), 0.0);
    std::vector<Tape::Seed> seeds;
    seeds.reserve(ep.length());
    TokenId input = kBos;
    for (std::size_t t = 0; t < ep.length(); ++t) {
      const auto [next, v] = critic.step(tape, s, input);
      ep.values[t] = tape.scalar(v);
      const NodeId err = tape.squared_error(v, q[t], 1.0);
      sse += tape.scalar(err);
      seeds.push_back({err, w});
      s = next;
      input = ep.actions.ids[t];
    }
    if (weight != 0.0) tape.backward(seeds, critic.params());
  }
  return sse / static_cast<double>(steps);
}

std::vector<Episode> collect_episodes(const models::PolicyNet& actor, const TrainCorpus& corpus,
                                      std::span<const std::size_t> batch,
                                      const mdp::RolloutOptions& opts, std::uint64_t seed,
                                      std::size_t workers) {
  std::vector<Episode> out(batch.size());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(derive_seed(seed, 1, i));
      const std::size_t ex = batch[i];
      const mdp::RewardFn reward = [&corpus, ex](const TokenSeq& a) { return corpus.reward(ex, a); };
      out[i] = mdp::rollout(actor, nullptr, corpus[ex].ctx, reward, opts, rng);
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(batch.size(), 1));
  if (workers == 1) {
    run(0, batch.size());
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (batch.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = std::min(batch.size(), w * chunk);
    const std::size_t hi = std::min(batch.size(), lo + chunk);
    pool.emplace_back([&, w, lo, hi] {
      try {
        run(lo, hi);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ------------------------------------------------------------------ steps

namespace {

mdp::RolloutOptions rollout_options(const TrainConfig& cfg) {
  mdp::RolloutOptions o;
  o.max_len = cfg.max_len;
  o.gamma = cfg.gamma;
  return o;
}

double mean_reward(std::span<const Episode> eps) {
  double s = 0.0;
  for (const Episode& ep : eps) s += ep.reward();
  return eps.empty() ? 0.0 : s / static_cast<double>(eps.size());
}

nlohmann::json dump(std::span<const Episode> eps) {
  nlohmann::json j = nlohmann::json::array();
  for (const Episode& ep : eps) j.push_back(ep.to_json());
  return j;
}

void check_advantages(std::span<const Episode> eps, const std::vector<std::vector<double>>& adv) {
  for (const auto& a : adv) {
    for (double x : a) {
      if (!std::isfinite(x)) throw EpisodesDiverged("non-finite advantage", "advantage", dump(eps));
    }
  }
}

void apply(core::ParamStore& store, core::AdamState& opt, const TrainConfig& cfg,
           std::span<const Episode> eps) {
  store.clip_grad_norm(cfg.clip_norm);
  try {
    core::adam_step(store, opt);
  } catch (const TrainingDiverged& e) {
    if (eps.empty()) throw;
    throw EpisodesDiverged(e.what(), e.where(), dump(eps));
  }
}

}  // namespace

double xe_step(models::PolicyNet& actor, core::AdamState& opt, const TrainCorpus& corpus,
               std::span<const std::size_t> batch, const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 2));
  std::vector<XeItem> items;
  items.reserve(batch.size());
  for (std::size_t i : batch) {
    const TrainExample& ex = corpus[i];
    items.push_back({ex.ctx, ex.refs[rng.index(ex.refs.size())]});
  }
  actor.params().zero_grads();
  const double loss = accumulate_xe(actor, items, cfg.max_len);
  apply(actor.params(), opt, cfg, {});
  return loss;
}

CriticStats critic_step(const models::PolicyNet& actor, models::ValueNet& critic,
                        core::AdamState& opt, const TrainCorpus& corpus,
                        std::span<const std::size_t> batch, const TrainConfig& cfg,
                        std::uint64_t seed) {
  CriticStats st;
  st.episodes = collect_episodes(actor, corpus, batch, rollout_options(cfg), seed, cfg.workers);
  st.mean_reward = mean_reward(st.episodes);
  critic.params().zero_grads();
  st.loss = accumulate_critic_regression(critic, st.episodes, 1.0);
  if (actor.params().grad_norm() != 0.0) {
    throw InternalError("actor received gradient while frozen for critic pretraining");
  }
  apply(critic.params(), opt, cfg, st.episodes);
  return st;
}

AcStats ac_step(models::PolicyNet& actor, models::ValueNet& critic, core::AdamState& actor_opt,
                core::AdamState& critic_opt, const TrainCorpus& corpus,
                std::span<const std::size_t> batch, const TrainConfig& cfg, std::uint64_t seed) {
  AcStats st;
  st.episodes = collect_episodes(actor, corpus, batch, rollout_options(cfg), seed, cfg.workers);
  st.mean_reward = mean_reward(st.episodes);

  // The regression pass records V(s_t) under the pre-update critic.
  critic.params().zero_grads();
  st.critic_loss = accumulate_critic_regression(critic, st.episodes, cfg.critic_weight);
  st.advantages.reserve(st.episodes.size());
  for (const Episode& ep : st.episodes) st.advantages.push_back(mdp::q_targets(ep).advantages);
  check_advantages(st.episodes, st.advantages);
  apply(critic.params(), critic_opt, cfg, st.episodes);

  actor.params().zero_grads();
  accumulate_policy_gradient(actor, st.episodes, st.advantages);
  st.actor_grad_norm = actor.params().grad_norm();
  apply(actor.params(), actor_opt, cfg, st.episodes);
  return st;
}

ScStats self_critical_step(models::PolicyNet& actor, core::AdamState& opt,
                           const TrainCorpus& corpus, std::span<const std::size_t> batch,
                           const TrainConfig& cfg, std::uint64_t seed) {
  ScStats st;
  st.episodes = collect_episodes(actor, corpus, batch, rollout_options(cfg), seed, cfg.workers);
  st.mean_reward = mean_reward(st.episodes);
  double greedy_sum = 0.0;
  st.advantages.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const TokenSeq greedy = models::greedy_decode(actor, corpus[batch[i]].ctx, cfg.max_len);
    const double rg = corpus.reward(batch[i], greedy);
    greedy_sum += rg;
    const Episode& ep = st.episodes[i];
    st.advantages.emplace_back(ep.length(), ep.reward() - rg);
  }
  st.mean_greedy_reward = batch.empty() ? 0.0 : greedy_sum / static_cast<double>(batch.size());
  check_advantages(st.episodes, st.advantages);

  actor.params().zero_grads();
  accumulate_policy_gradient(actor, st.episodes, st.advantages);
  st.actor_grad_norm = actor.params().grad_norm();
  apply(actor.params(), opt, cfg, st.episodes);
  return st;
}

// ----------------------------------------------------------------- stages

std::vector<std::size_t> sample_batch(std::size_t corpus_size, std::size_t batch,
                                      std::uint64_t seed) {
  if (corpus_size == 0) throw InvalidArgument("sample_batch: empty corpus");
  Rng rng(derive_seed(seed, 0));
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = rng.index(corpus_size);
  return out;
}

namespace {

struct Window {
  std::size_t n = 0;
  double reward = 0.0, critic = 0.0, xe = 0.0, ms = 0.0;
  bool has_reward = false, has_critic = false, has_xe = false;

  RewardLog::Row row(std::size_t iter, bool timing) const {
    const double k = static_cast<double>(n);
    RewardLog::Row r;
    r.iter = iter;
    if (has_reward) r.mean_reward = reward / k;
    if (has_critic) r.critic_loss = critic / k;
    if (has_xe) r.xe_loss = xe / k;
    r.ms = timing ? ms : 0.0;
    return r;
  }
};

}  // namespace

StageResult run_stage(const TrainConfig& cfg, const TrainCorpus& corpus,
                      std::optional<models::PolicyNet> actor,
                      std::optional<models::ValueNet> critic, const models::ModelDims& dims,
                      const StageHooks& hooks) {
  cfg.validate();
  const std::string order = "stage order: train-xe -> pretrain-critic -> train-ac";
  switch (cfg.stage) {
    case Stage::Xe:
      if (!actor) actor.emplace(dims, derive_seed(cfg.seed, 0xA));
      break;
    case Stage::CriticPretrain:
      if (!actor) throw InvalidState("critic-pretrain requires an XE-pretrained actor (" + order + ")");
      if (!critic) critic.emplace(actor->dims(), derive_seed(cfg.seed, 0xC));
      break;
    case Stage::ActorCritic:
      if (!actor) throw InvalidState("actor-critic requires an XE-pretrained actor (" + order + ")");
      if (!critic) throw InvalidState("actor-critic requires a pretrained critic (" + order + ")");
      break;
    case Stage::SelfCritical:
      if (!actor) throw InvalidState("self-critical requires an XE-pretrained actor (train-xe first)");
      break;
  }
  if (actor->dims().context != corpus.context_dim()) {
    throw InvalidArgument("actor context dimension does not match the corpus");
  }
  actor->params().zero_grads();
  if (critic) critic->params().zero_grads();

  core::AdamState actor_opt(cfg.lr.initial);
  core::AdamState critic_opt(cfg.lr.initial);
  StageResult result{std::move(*actor), std::move(critic), {}};
  models::PolicyNet& pi = result.actor;

  Window win;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t base = derive_seed(cfg.seed, it);
    const std::vector<std::size_t> batch = sample_batch(corpus.size(), cfg.batch, base);
    actor_opt.lr = critic_opt.lr = cfg.lr.at(it);
    const bool logged = (it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations;

    std::span<const Episode> eps;
    std::vector<Episode> held;
    switch (cfg.stage) {
      case Stage::Xe:
        win.xe += xe_step(pi, actor_opt, corpus, batch, cfg, base);
        win.has_xe = true;
        break;
      case Stage::CriticPretrain: {
        CriticStats st = critic_step(pi, *result.critic, critic_opt, corpus, batch, cfg, base);
        win.reward += st.mean_reward;
        win.critic += st.loss;
        win.has_reward = win.has_critic = true;
        held = std::move(st.episodes);
        eps = held;
        break;
      }
      case Stage::ActorCritic: {
        AcStats st = ac_step(pi, *result.critic, actor_opt, critic_opt, corpus, batch, cfg, base);
        win.reward += st.mean_reward;
        win.critic += st.critic_loss;
        win.has_reward = win.has_critic = true;
        held = std::move(st.episodes);
        eps = held;
        break;
      }
      case Stage::SelfCritical: {
        ScStats st = self_critical_step(pi, actor_opt, corpus, batch, cfg, base);
        win.reward += st.mean_reward;
        win.has_reward = true;
        held = std::move(st.episodes);
        eps = held;
        break;
      }
    }
    ++win.n;
    win.ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    if (logged) {
      const RewardLog::Row row = win.row(it + 1, cfg.log_timing);
      result.log.append(row);
      spdlog::debug("{} iter {} reward {} critic {} xe {}", stage_name(cfg.stage), row.iter,
                    fmt_opt(row.mean_reward), fmt_opt(row.critic_loss), fmt_opt(row.xe_loss));
      if (hooks.on_episodes && !eps.empty()) hooks.on_episodes(it + 1, eps);
      win = Window{};
    }
  }
  return result;
}

EvalResult evaluate(const models::PolicyNet& actor, const std::vector<data::CaptionRecord>& records,
                    const data::Vocabulary& vocab, std::size_t max_len,
                    std::span<const metrics::Metric> metrics) {
  if (records.empty()) throw InvalidArgument("evaluation corpus is empty");
  std::vector<std::string> ids;
  std::vector<std::vector<TokenSeq>> refs;
  EvalResult out;
  for (const auto& r : records) {
    ids.push_back(r.id);
    refs.push_back(data::encode_refs(r, vocab));
    out.captions.push_back(models::greedy_decode(actor, r.context, max_len));
  }
  const metrics::DocFreqTable df = metrics::build_doc_freq(refs);
  out.report = metrics::score_corpus(ids, out.captions, refs, metrics, &df, true);
  return out;
}

}  // namespace acseq::train
