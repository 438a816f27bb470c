#include <gtest/gtest.h>

#include <cmath>

#include "acseq/errors.hpp"
#include "acseq/training.hpp"
#include "support/tiny_mdp.hpp"

namespace acseq::train {
namespace {

using models::ModelDims;
using models::PolicyNet;
using models::ValueNet;

struct SmallTask {
  std::vector<data::CaptionRecord> records;
  data::Vocabulary vocab;
  TrainCorpus corpus;
  ModelDims dims;

  static SmallTask make(data::CorpusMode mode, std::size_t n = 40) {
    data::TaskSpec spec;
    spec.attributes = 6;
    spec.per_example = 2;
    spec.mode = mode;
    spec.seed = 3;
    auto recs = data::generate_corpus(spec, n);
    auto vocab = data::build_vocab(recs);
    auto corpus = TrainCorpus::from_records(recs, vocab, metrics::Metric::CiderD);
    ModelDims d{vocab.size(), 8, 12, spec.attributes, kEos};
    return SmallTask{std::move(recs), std::move(vocab), std::move(corpus), d};
  }
};

TrainConfig quick(Stage s, std::size_t iters = 6) {
  TrainConfig c = TrainConfig::defaults(s);
  c.iterations = iters;
  c.batch = 4;
  c.log_every = 2;
  c.max_len = 10;
  c.seed = 11;
  c.lr = {1e-3, 4, 1e-4};
  return c;
}

TEST(Xe, UniformPolicyLossIsLengthTimesLogActions) {
  const auto task = SmallTask::make(data::CorpusMode::Deterministic);
  PolicyNet actor(task.dims, 1);
  for (const char* n : {"actor.out.w", "actor.out.b"}) {
    auto& v = actor.params()[actor.params().id(n)].value;
    std::fill(v.begin(), v.end(), 0.0);
  }
  std::vector<XeItem> items;
  double want = 0.0;
  const double n_actions = double(task.dims.vocab - task.dims.min_output);
  for (std::size_t i = 0; i < 5; ++i) {
    items.push_back({task.corpus[i].ctx, task.corpus[i].refs[0]});
    want += double(task.corpus[i].refs[0].ids.size()) * std::log(n_actions);
  }
  EXPECT_NEAR(accumulate_xe(actor, items, 16), want / 5.0, 1e-12);
  // Truncation keeps only the first max_len targets.
  actor.params().zero_grads();
  EXPECT_NEAR(accumulate_xe(actor, std::span(items).first(1), 2), 2.0 * std::log(n_actions), 1e-12);
  EXPECT_THROW(accumulate_xe(actor, {}, 4), InvalidArgument);
}

TEST(PolicyGradient, ZeroAdvantagesGiveZeroGradient) {
  const testing::TinyMdp m;
  PolicyNet actor = m.make_actor(2);
  Rng rng(1);
  std::vector<mdp::Episode> eps;
  std::vector<std::vector<double>> adv;
  for (int i = 0; i < 5; ++i) {
    eps.push_back(mdp::rollout(actor, nullptr, m.ctx, m.reward_fn(), m.rollout_options(), rng));
    adv.emplace_back(eps.back().length(), 0.0);
  }
  actor.params().zero_grads();
  EXPECT_EQ(accumulate_policy_gradient(actor, eps, adv), 0.0);
  EXPECT_EQ(actor.params().grad_norm(), 0.0);
  adv.pop_back();
  EXPECT_THROW(accumulate_policy_gradient(actor, eps, adv), InvalidArgument);
}

TEST(PolicyGradient, SurrogateGradientMatchesHandRule) {
  // One episode, one step: the gradient of A * nll w.r.t. the output bias
  // is A * (p - onehot) / B with B = 1.
  const testing::TinyMdp m;
  PolicyNet actor = m.make_actor(4);
  mdp::Episode ep;
  ep.ctx = m.ctx;
  ep.actions = TokenSeq{{1}, false};
  ep.set_reward(0.0);
  const auto table = testing::policy_table(m, actor);
  actor.params().zero_grads();
  const std::vector<std::vector<double>> adv{{2.5}};
  accumulate_policy_gradient(actor, {&ep, 1}, adv);
  const auto& g = actor.params()[actor.params().id("actor.out.b")].grad;
  for (TokenId k = 0; k < 3; ++k) {
    EXPECT_NEAR(g[k], 2.5 * (table.first[k] - (k == 1 ? 1.0 : 0.0)), 1e-14);
  }
}

TEST(PolicyGradient, ExactExpectationEqualsGradientOfExpectedReward) {
  const testing::TinyMdp m;
  PolicyNet actor = m.make_actor(5);
  const auto exact = testing::exact_expected_gradient(m, actor, {});
  const auto fd = testing::fd_gradient_of_expected_reward(m, actor);
  ASSERT_EQ(exact.size(), fd.size());
  for (std::size_t k = 0; k < exact.size(); ++k) EXPECT_NEAR(exact[k], fd[k], 1e-8) << k;
}

TEST(PolicyGradient, BaselineShiftLeavesExpectedGradientUnchanged) {
  const testing::TinyMdp m;
  PolicyNet actor = m.make_actor(5);
  const ValueNet critic = m.make_critic(6);
  const auto ref = testing::exact_expected_gradient(m, actor, {&critic, 0.0});
  for (double c : {-5.0, 17.0}) {
    const auto g = testing::exact_expected_gradient(m, actor, {&critic, c});
    for (std::size_t k = 0; k < g.size(); ++k) EXPECT_NEAR(g[k], ref[k], 1e-12) << c << " " << k;
  }
  const auto none = testing::exact_expected_gradient(m, actor, {});
  for (std::size_t k = 0; k < none.size(); ++k) EXPECT_NEAR(none[k], ref[k], 1e-12);
}

TEST(CriticRegression, WeightScalesGradientsAndFillsValues) {
  const testing::TinyMdp m;
  const PolicyNet actor = m.make_actor(1);
  ValueNet critic = m.make_critic(2);
  Rng rng(3);
  std::vector<mdp::Episode> eps;
  for (int i = 0; i < 4; ++i) {
    eps.push_back(mdp::rollout(actor, nullptr, m.ctx, m.reward_fn(), m.rollout_options(), rng));
  }
  critic.params().zero_grads();
  const double mse1 = accumulate_critic_regression(critic, eps, 1.0);
  const auto g1 = critic.params().flat_grads();
  critic.params().zero_grads();
  const double mse2 = accumulate_critic_regression(critic, eps, 2.0);
  const auto g2 = critic.params().flat_grads();
  EXPECT_EQ(mse1, mse2);
  for (std::size_t k = 0; k < g1.size(); ++k) EXPECT_NEAR(g2[k], 2.0 * g1[k], 1e-15);
  critic.params().zero_grads();
  accumulate_critic_regression(critic, eps, 0.0);
  EXPECT_EQ(critic.params().grad_norm(), 0.0);
  // Values are the critic's, MSE is against r_T with gamma 1.
  double sse = 0.0;
  std::size_t steps = 0;
  for (const auto& ep : eps) {
    EXPECT_EQ(ep.values, critic.values_along(ep.ctx, ep.actions.ids));
    for (double v : ep.values) {
      sse += (v - ep.reward()) * (v - ep.reward());
      ++steps;
    }
  }
  EXPECT_NEAR(mse1, sse / double(steps), 1e-14);
}

TEST(Steps, ActorCriticAdvantagesVaryPerTokenSelfCriticalDoNot) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  // Spread the critic so V differs between prefixes.
  Rng rng(5);
  for (const auto& [name, id] : critic.params().names()) {
    for (double& v : critic.params()[id].value) v = rng.uniform(-0.5, 0.5);
  }
  core::AdamState a(1e-3), c(1e-3);
  const TrainConfig cfg = quick(Stage::ActorCritic);
  const auto batch = sample_batch(task.corpus.size(), 8, 1);
  const AcStats ac = ac_step(actor, critic, a, c, task.corpus, batch, cfg, 1);
  std::size_t varied = 0;
  for (const auto& adv : ac.advantages) {
    if (std::adjacent_find(adv.begin(), adv.end(), std::not_equal_to<>()) != adv.end()) ++varied;
  }
  EXPECT_GT(varied, 0u);
  const ScStats sc = self_critical_step(actor, a, task.corpus, batch, quick(Stage::SelfCritical), 1);
  for (std::size_t i = 0; i < sc.advantages.size(); ++i) {
    const auto& adv = sc.advantages[i];
    ASSERT_EQ(adv.size(), sc.episodes[i].length());
    for (double x : adv) EXPECT_EQ(x, adv.front());
  }
}

TEST(Steps, AdvantagesUsePreUpdateCriticValues) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  const ValueNet before = critic;
  core::AdamState a(1e-2), c(1e-2);
  const auto batch = sample_batch(task.corpus.size(), 4, 2);
  const AcStats st = ac_step(actor, critic, a, c, task.corpus, batch, quick(Stage::ActorCritic), 2);
  for (std::size_t i = 0; i < st.episodes.size(); ++i) {
    const auto& ep = st.episodes[i];
    const auto v = before.values_along(ep.ctx, ep.actions.ids);
    const auto q = mdp::terminal_q(ep);
    for (std::size_t t = 0; t < v.size(); ++t) EXPECT_EQ(st.advantages[i][t], q[t] - v[t]);
  }
  EXPECT_NE(critic.params().value_hash(), before.params().value_hash());
}

TEST(Steps, CriticPretrainLeavesActorUntouched) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  const auto hash = actor.params().value_hash();
  core::AdamState opt(1e-3);
  const auto batch = sample_batch(task.corpus.size(), 4, 3);
  const CriticStats st = critic_step(actor, critic, opt, task.corpus, batch, quick(Stage::CriticPretrain), 3);
  EXPECT_EQ(actor.params().value_hash(), hash);
  EXPECT_EQ(st.episodes.size(), 4u);
  EXPECT_GE(st.loss, 0.0);
}

TEST(Steps, FreezeViolationIsAnInternalError) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  actor.params()[0].grad[0] = 1.0;  // stray gradient on the frozen actor
  core::AdamState opt(1e-3);
  const auto batch = sample_batch(task.corpus.size(), 2, 3);
  EXPECT_THROW(critic_step(actor, critic, opt, task.corpus, batch, quick(Stage::CriticPretrain), 3),
               InternalError);
}

TEST(Steps, NonFiniteCriticValuesRaiseWithEpisodeDump) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  critic.params()[critic.params().id("critic.head.b")].value[0] = INFINITY;
  core::AdamState a(1e-3), c(1e-3);
  const auto batch = sample_batch(task.corpus.size(), 3, 3);
  try {
    ac_step(actor, critic, a, c, task.corpus, batch, quick(Stage::ActorCritic), 3);
    FAIL() << "expected divergence";
  } catch (const EpisodesDiverged& e) {
    EXPECT_EQ(e.episodes().size(), 3u);
  }
}

TEST(Stages, PrerequisitesAreEnforced) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  PolicyNet actor(task.dims, 1);
  ValueNet critic(task.dims, 2);
  auto expect_state = [&](Stage s, std::optional<PolicyNet> a, std::optional<ValueNet> c,
                          const std::string& needle) {
    try {
      run_stage(quick(s), task.corpus, std::move(a), std::move(c), task.dims);
      ADD_FAILURE() << "no error for " << stage_name(s);
    } catch (const InvalidState& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_state(Stage::CriticPretrain, std::nullopt, std::nullopt, "train-xe");
  expect_state(Stage::ActorCritic, std::nullopt, critic, "train-xe");
  expect_state(Stage::ActorCritic, actor, std::nullopt, "pretrain-critic");
  expect_state(Stage::SelfCritical, std::nullopt, std::nullopt, "train-xe");
}

TEST(Stages, ContextDimensionMismatchIsRejected) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  ModelDims d = task.dims;
  d.context = 3;
  EXPECT_THROW(run_stage(quick(Stage::Xe), task.corpus, std::nullopt, std::nullopt, d),
               InvalidArgument);
}

StageResult run_pipeline(const SmallTask& task, Stage last, std::size_t workers) {
  TrainConfig xe = quick(Stage::Xe);
  xe.workers = workers;
  StageResult r = run_stage(xe, task.corpus, std::nullopt, std::nullopt, task.dims);
  if (last == Stage::Xe) return r;
  TrainConfig cp = quick(Stage::CriticPretrain);
  cp.workers = workers;
  r = run_stage(cp, task.corpus, std::move(r.actor), std::nullopt, task.dims);
  if (last == Stage::CriticPretrain) return r;
  TrainConfig ac = quick(Stage::ActorCritic);
  ac.workers = workers;
  return run_stage(ac, task.corpus, std::move(r.actor), std::move(r.critic), task.dims);
}

TEST(Stages, SameSeedIsBitIdenticalAcrossWorkerCounts) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  const StageResult a = run_pipeline(task, Stage::ActorCritic, 1);
  const StageResult b = run_pipeline(task, Stage::ActorCritic, 1);
  const StageResult c = run_pipeline(task, Stage::ActorCritic, 3);
  EXPECT_EQ(a.log.to_csv(), b.log.to_csv());
  EXPECT_EQ(a.log.to_csv(), c.log.to_csv());
  EXPECT_EQ(a.actor.params().value_hash(), b.actor.params().value_hash());
  EXPECT_EQ(a.actor.params().value_hash(), c.actor.params().value_hash());
  EXPECT_EQ(a.critic->params().value_hash(), c.critic->params().value_hash());
}

TEST(Stages, LogRowsFollowTheLoggingInterval) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  TrainConfig cfg = quick(Stage::Xe, 7);
  cfg.log_every = 3;
  const StageResult r = run_stage(cfg, task.corpus, std::nullopt, std::nullopt, task.dims);
  std::vector<std::size_t> iters;
  for (const auto& row : r.log.rows()) {
    iters.push_back(row.iter);
    EXPECT_TRUE(row.xe_loss.has_value());
    EXPECT_FALSE(row.mean_reward.has_value());
    EXPECT_EQ(row.ms, 0.0);
  }
  EXPECT_EQ(iters, (std::vector<std::size_t>{3, 6, 7}));
}

TEST(Stages, SelfCriticalRunsWithoutCritic) {
  const auto task = SmallTask::make(data::CorpusMode::Varied);
  StageResult xe = run_pipeline(task, Stage::Xe, 1);
  std::size_t hooked = 0;
  StageHooks hooks;
  hooks.on_episodes = [&](std::size_t, std::span<const mdp::Episode> eps) { hooked += eps.size(); };
  const StageResult sc = run_stage(quick(Stage::SelfCritical), task.corpus, std::move(xe.actor),
                                   std::nullopt, task.dims, hooks);
  EXPECT_FALSE(sc.critic.has_value());
  EXPECT_EQ(hooked, 3u * 4u);
  for (const auto& row : sc.log.rows()) {
    EXPECT_TRUE(row.mean_reward.has_value());
    EXPECT_FALSE(row.critic_loss.has_value());
  }
}

TEST(RewardLog, StrictlyIncreasingAndCsvShape) {
  RewardLog log;
  log.append({1, 0.5, std::nullopt, std::nullopt, 0.0});
  EXPECT_THROW(log.append({1, 0.6, std::nullopt, std::nullopt, 0.0}), InvalidArgument);
  log.append({2, 0.25, 1.5, std::nullopt, 12.3456});
  EXPECT_EQ(log.to_csv(),
            "iter,mean_reward,critic_loss,xe_loss,ms\n1,0.5,,,0.000\n2,0.25,1.5,,12.346\n");
}

TEST(Config, ValidationAndSchedule) {
  TrainConfig c = TrainConfig::defaults(Stage::ActorCritic);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.batch, kReferenceBatch);
  EXPECT_EQ(c.critic_weight, kReferenceCriticWeight);
  EXPECT_EQ(c.reward, metrics::Metric::CiderD);
  const LrSchedule s{1.0, 3, 0.1};
  EXPECT_EQ(s.at(2), 1.0);
  EXPECT_EQ(s.at(3), 0.1);
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& t) { t.batch = 0; }, [](TrainConfig& t) { t.gamma = 1.5; },
           [](TrainConfig& t) { t.critic_weight = -1; }, [](TrainConfig& t) { t.lr.initial = 0; },
           [](TrainConfig& t) { t.workers = 0; }, [](TrainConfig& t) { t.max_len = 0; }}) {
    TrainConfig bad = c;
    mutate(bad);
    EXPECT_THROW(bad.validate(), InvalidArgument);
  }
  EXPECT_EQ(parse_stage("actor-critic"), Stage::ActorCritic);
  EXPECT_THROW(parse_stage("warmup"), InvalidArgument);
}

TEST(Corpus, RejectsBadInputAndBuildsTableFromRefs) {
  EXPECT_THROW(TrainCorpus({}, metrics::Metric::CiderD), InvalidArgument);
  std::vector<TrainExample> ex{{{1.0, 0.0}, {TokenSeq::from_ids({4, kEos})}, {}},
                               {{1.0}, {TokenSeq::from_ids({5, kEos})}, {}}};
  EXPECT_THROW(TrainCorpus(ex, metrics::Metric::Bleu4), InvalidArgument);
  ex[1].ctx = {0.0, 1.0};
  const TrainCorpus c(ex, metrics::Metric::CiderD);
  EXPECT_EQ(c.doc_freq()->corpus_size(), 2u);
  // Identity on a one-token caption: only the unigram order contributes.
  EXPECT_NEAR(c.reward(0, TokenSeq::from_ids({4, kEos})), 2.5, 1e-12);
}

TEST(Batch, SampleIsDeterministicAndInRange) {
  const auto a = sample_batch(10, 50, 7), b = sample_batch(10, 50, 7);
  EXPECT_EQ(a, b);
  for (auto i : a) EXPECT_LT(i, 10u);
  EXPECT_THROW(sample_batch(0, 2, 1), InvalidArgument);
}

TEST(Evaluate, ScoresGreedyCaptions) {
  const auto task = SmallTask::make(data::CorpusMode::Deterministic, 10);
  const PolicyNet actor(task.dims, 1);
  const metrics::Metric ms[] = {metrics::Metric::Bleu4, metrics::Metric::CiderD};
  const EvalResult r = evaluate(actor, task.records, task.vocab, 8, ms);
  EXPECT_EQ(r.captions.size(), 10u);
  EXPECT_EQ(r.report.sentences.size(), 10u);
  EXPECT_TRUE(r.report.corpus.count("cider-d"));
}

}  // namespace
}  // namespace acseq::train
