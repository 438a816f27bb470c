// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Artifacts are kept under --workdir.
//
//   acseq_acceptance [--workdir DIR] [--only N[,N...]]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "acseq/adam.hpp"
#include "acseq/checkpoint.hpp"
#include "acseq/mdp.hpp"
#include "acseq/metrics.hpp"
#include "acseq/rng.hpp"
#include "acseq/synth.hpp"
#include "acseq/training.hpp"
#include "tiny_mdp.hpp"

namespace {

using namespace acseq;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

fs::path g_work;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string p(const std::string& name) { return (g_work / name).string(); }

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const std::string& args) {
  const std::string cmd = std::string(ACSEQ_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void must(const std::string& args) {
  const CliRun r = cli(args);
  if (r.code != 0) {
    throw std::runtime_error("acseq " + args + " exited " + std::to_string(r.code) + ":\n" + r.out);
  }
}

json eval_report(const std::string& ckpt, const std::string& corpus, const std::string& vocab,
                 const std::string& out, const std::string& captions = "") {
  std::string args = "eval --ckpt " + ckpt + " --corpus " + corpus + " --vocab " + vocab +
                     " --out " + out;
  if (!captions.empty()) args += " --captions " + captions;
  must(args);
  return json::parse(core::read_file(out));
}

std::vector<double> csv_rewards(const std::string& path) {
  std::istringstream in(core::read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    out.push_back(std::stod(line.substr(a + 1, b - a - 1)));
  }
  return out;
}

std::vector<std::size_t> csv_iters(const std::string& path) {
  std::istringstream in(core::read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::size_t> out;
  while (std::getline(in, line)) out.push_back(std::stoul(line.substr(0, line.find(','))));
  return out;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ------------------------------------------------------------ shared runs

// Deterministic corpus and its XE actor.
struct DetArtifacts {
  double xe_seconds = 0.0;
};
std::optional<DetArtifacts> g_det;

const DetArtifacts& det() {
  if (g_det) return *g_det;
  const std::string gen = " --n 2000 --attrs 20 --per-example 3 --refs 5 --mode deterministic";
  must("gen-data --out " + p("det_train.jsonl") + gen + " --seed 11");
  must("gen-data --out " + p("det_test.jsonl") + " --n 200 --attrs 20 --per-example 3 --refs 5"
       " --mode deterministic --seed 12");
  must("build-vocab --corpus " + p("det_train.jsonl") + " --out " + p("det.vocab"));
  const auto t0 = Clock::now();
  must("train-xe --corpus " + p("det_train.jsonl") + " --vocab " + p("det.vocab") + " --out " +
       p("det_xe.ckpt"));
  g_det = DetArtifacts{seconds_since(t0)};
  return *g_det;
}

// Varied corpus, XE actor, pretrained critic, AC and SC runs from the same
// checkpoint and seed.
struct VarArtifacts {
  double xe_seconds = 0.0, critic_seconds = 0.0, ac_seconds = 0.0, sc_seconds = 0.0;
  json xe_eval, ac_eval, sc_eval;
};
std::optional<VarArtifacts> g_var;

std::string var_common() {
  return "--corpus " + p("var_train.jsonl") + " --vocab " + p("var.vocab") + " --seed 1";
}

const VarArtifacts& var() {
  if (g_var) return *g_var;
  VarArtifacts v;
  const std::string gen = " --per-example 4 --mode varied";
  must("gen-data --out " + p("var_train.jsonl") + " --n 2000 --seed 1" + gen);
  must("gen-data --out " + p("var_test.jsonl") + " --n 200 --seed 2" + gen);
  must("build-vocab --corpus " + p("var_train.jsonl") + " --out " + p("var.vocab"));
  auto t0 = Clock::now();
  must("train-xe " + var_common() + " --out " + p("var_xe.ckpt"));
  v.xe_seconds = seconds_since(t0);
  t0 = Clock::now();
  must("pretrain-critic " + var_common() + " --actor " + p("var_xe.ckpt") + " --out " +
       p("var_critic.ckpt"));
  v.critic_seconds = seconds_since(t0);
  t0 = Clock::now();
  must("train-ac " + var_common() + " --actor " + p("var_xe.ckpt") + " --critic " +
       p("var_critic.ckpt") + " --out " + p("var_ac.ckpt"));
  v.ac_seconds = seconds_since(t0);
  t0 = Clock::now();
  must("train-sc " + var_common() + " --actor " + p("var_xe.ckpt") + " --out " + p("var_sc.ckpt"));
  v.sc_seconds = seconds_since(t0);
  const std::string test = p("var_test.jsonl"), vocab = p("var.vocab");
  v.xe_eval = eval_report(p("var_xe.ckpt"), test, vocab, p("var_xe_eval.json"));
  v.ac_eval = eval_report(p("var_ac.ckpt"), test, vocab, p("var_ac_eval.json"));
  v.sc_eval = eval_report(p("var_sc.ckpt"), test, vocab, p("var_sc_eval.json"));
  g_var = std::move(v);
  return *g_var;
}

// -------------------------------------------------------------- criteria

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  const CliRun r = cli("gradcheck");
  const double s = seconds_since(t0);
  double err = INFINITY;
  const auto at = r.out.find("max rel err ", r.out.rfind("gradcheck "));
  if (at != std::string::npos) err = std::stod(r.out.substr(at + 12));
  return {r.code == 0 && err < 1e-6 && s < 60.0,
          fmt("exit %d, max rel err %.2e, %.1fs", r.code, err, s)};
}

Verdict unbiasedness() {
  const auto t0 = Clock::now();
  const testing::TinyMdp m;
  models::PolicyNet actor = m.make_actor(21);
  const models::ValueNet critic = m.make_critic(22);
  const std::vector<double> truth = testing::fd_gradient_of_expected_reward(m, actor);
  const testing::McStats mc = testing::sampled_gradient(m, actor, &critic, 200000, 23);
  std::size_t outside = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double se = std::sqrt(mc.var[i] / static_cast<double>(mc.n));
    const double dev = std::abs(mc.mean[i] - truth[i]);
    // Coordinates with no sampling variance must agree to FD accuracy.
    const double z = se > 0.0 ? dev / se : (dev < 1e-6 ? 0.0 : INFINITY);
    worst = std::max(worst, z);
    if (z > 3.0) ++outside;
  }
  const double s = seconds_since(t0);
  return {outside == 0 && s < 120.0,
          fmt("%zu coords, %zu beyond 3 SE, worst %.2f SE, %.1fs", truth.size(), outside, worst, s)};
}

Verdict baseline_invariance() {
  const testing::TinyMdp m;
  models::PolicyNet actor = m.make_actor(21);
  const models::ValueNet critic = m.make_critic(22);
  const std::vector<double> ref = testing::exact_expected_gradient(m, actor, {&critic, 0.0});
  double worst = 0.0;
  for (double c : {-5.0, 0.0, 17.0}) {
    const std::vector<double> g = testing::exact_expected_gradient(m, actor, {&critic, c});
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i] - ref[i]));
  }
  return {worst <= 1e-12, fmt("max |diff| %.2e over c in {-5, 0, 17}", worst)};
}

Verdict variance_reduction() {
  const testing::TinyMdp m;
  models::PolicyNet actor = m.make_actor(21);
  models::ValueNet critic = m.make_critic(22);
  testing::pretrain_critic(m, actor, critic, 2000, 24);
  const testing::McStats with = testing::sampled_gradient(m, actor, &critic, 50000, 25);
  const testing::McStats without = testing::sampled_gradient(m, actor, nullptr, 50000, 25);
  double vw = 0.0, v0 = 0.0;
  for (double x : with.var) vw += x;
  for (double x : without.var) v0 += x;
  return {vw <= v0, fmt("summed variance %.4f with critic, %.4f with V = 0", vw, v0)};
}

Verdict q_identity() {
  Rng rng(31);
  std::size_t mismatches = 0, n = 0;
  for (double gamma : {0.5, 0.9, 1.0}) {
    for (int e = 0; e < 10000; ++e) {
      mdp::Episode ep;
      ep.gamma = gamma;
      const std::size_t T = 1 + rng.index(16);
      for (std::size_t t = 0; t < T; ++t) ep.actions.ids.push_back(static_cast<TokenId>(4 + rng.index(20)));
      ep.set_reward(rng.uniform(-2.0, 10.0));
      const std::vector<double> closed = mdp::terminal_q(ep);
      const std::vector<double> summed = mdp::discounted_returns(mdp::reward_vector(ep), gamma);
      if (closed != summed) ++mismatches;
      ++n;
    }
  }
  return {mismatches == 0, fmt("%zu episodes, %zu mismatches", n, mismatches)};
}

// Chain actor that always emits "there is one attr00"; with a single
// five-token reference the ROUGE-L reward is the same on every episode.
Verdict critic_convergence() {
  const auto t0 = Clock::now();
  const data::Vocabulary vocab(std::vector<std::string>{"<pad>", "<bos>", "<eos>", "<unk>", "there",
                                                        "is", "one", "attr00", "nearby"});
  const models::ModelDims d{vocab.size(), vocab.size(), vocab.size(), 2, kEos};
  models::PolicyNet actor(d, 0);
  auto& st = actor.params();
  for (const auto& [name, id] : st.names()) std::fill(st[id].value.begin(), st[id].value.end(), 0.0);
  const std::size_t V = vocab.size(), H = V;
  auto& E = st[st.id("actor.embed")].value;
  auto& wih = st[st.id("actor.lstm.w_ih")].value;
  auto& b = st[st.id("actor.lstm.b")].value;
  auto& wo = st[st.id("actor.out.w")].value;
  for (std::size_t k = 0; k < V; ++k) {
    E[k * V + k] = 1.0;
    wih[(2 * H + k) * V + k] = 20.0;
  }
  for (std::size_t k = 0; k < H; ++k) {
    b[k] = 20.0;
    b[H + k] = -20.0;
    b[3 * H + k] = 20.0;
  }
  const std::vector<std::pair<TokenId, TokenId>> chain{{kBos, 4}, {4, 5}, {5, 6}, {6, 7}, {7, kEos}};
  for (auto [from, to] : chain) wo[to * H + from] = 40.0;

  std::vector<data::CaptionRecord> records;
  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    records.push_back({"c" + std::to_string(i), {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)},
                       {{"there", "is", "one", "attr00", "nearby"}}});
  }
  const train::TrainCorpus corpus =
      train::TrainCorpus::from_records(records, vocab, metrics::Metric::RougeL);
  const TokenSeq caption = models::greedy_decode(actor, records[0].context, 16);
  const double c = corpus.reward(0, caption);

  train::TrainConfig cfg = train::TrainConfig::defaults(train::Stage::CriticPretrain);
  cfg.reward = metrics::Metric::RougeL;
  cfg.seed = 42;
  const train::StageResult res = train::run_stage(cfg, corpus, actor, std::nullopt, d);
  double worst = 0.0;
  for (const auto& r : records) {
    const std::vector<double> v = res.critic->values_along(r.context, caption.ids);
    for (double x : v) worst = std::max(worst, std::abs(x - c));
  }

  const testing::TinyMdp m;
  const models::PolicyNet tiny_actor = m.make_actor(21);
  models::ValueNet tiny_critic = m.make_critic(22);
  testing::pretrain_critic(m, tiny_actor, tiny_critic, 2000, 43);
  const testing::TinyValues exact = testing::exact_values(m, tiny_actor);
  double tiny_worst = std::abs(tiny_critic.value_of_prefix(m.ctx, {}) - exact.v0);
  for (TokenId a = 0; a < testing::TinyMdp::kVocab; ++a) {
    const TokenId prefix[] = {a};
    tiny_worst = std::max(tiny_worst, std::abs(tiny_critic.value_of_prefix(m.ctx, prefix) - exact.v1[a]));
  }
  const double s = seconds_since(t0);
  return {worst < 0.05 && tiny_worst <= 0.02 && s < 120.0,
          fmt("constant task c=%.4f max |V-c| %.4f after %zu iters; tiny MDP max err %.4f; %.1fs", c,
              worst, cfg.iterations, tiny_worst, s)};
}

Verdict xe_exact_match() {
  const DetArtifacts& a = det();
  const json rep = eval_report(p("det_xe.ckpt"), p("det_test.jsonl"), p("det.vocab"),
                               p("det_xe_eval.json"), p("det_xe_captions.jsonl"));
  const std::vector<data::CaptionRecord> test = data::read_corpus(p("det_test.jsonl"));
  std::istringstream in(core::read_file(p("det_xe_captions.jsonl")));
  std::string line;
  std::size_t i = 0, exact = 0;
  while (std::getline(in, line)) {
    const auto caption = json::parse(line)["caption"].get<std::vector<std::string>>();
    if (i < test.size() && caption == test[i].refs[0]) ++exact;
    ++i;
  }
  const double frac = static_cast<double>(exact) / static_cast<double>(test.size());
  const auto iters = csv_iters(p("det_xe.ckpt.csv"));
  const std::size_t ran = iters.empty() ? 0 : iters.back();
  return {frac >= 0.99 && ran <= 5000 && a.xe_seconds < 600.0,
          fmt("%zu/%zu exact (%.1f%%), %zu iterations, %.0fs", exact, test.size(), 100.0 * frac, ran,
              a.xe_seconds)};
}

Verdict rl_improvement() {
  const VarArtifacts& v = var();
  const double xe = v.xe_eval["corpus"]["cider-d"].get<double>();
  const double ac = v.ac_eval["corpus"]["cider-d"].get<double>();
  const double rel = (ac - xe) / xe;
  const std::vector<double> r = csv_rewards(p("var_ac.ckpt.csv"));
  const std::size_t q = r.size() / 4;
  const double q1 = q ? mean(std::span(r).first(q)) : 0.0;
  const double q4 = q ? mean(std::span(r).last(q)) : 0.0;
  const double total = v.xe_seconds + v.critic_seconds + v.ac_seconds;
  return {rel >= 0.05 && q > 0 && q4 > q1 && total < 1800.0,
          fmt("held-out CIDEr-D %.4f -> %.4f (%+.1f%%), reward quartiles %.4f -> %.4f, %.0fs", xe, ac,
              100.0 * rel, q1, q4, total)};
}

Verdict advantage_shape() {
  var();
  const data::Vocabulary vocab = data::Vocabulary::parse(core::read_file(p("var.vocab")));
  const std::vector<data::CaptionRecord> records = data::read_corpus(p("var_train.jsonl"));
  const train::TrainCorpus corpus =
      train::TrainCorpus::from_records(records, vocab, metrics::Metric::CiderD);
  const core::Checkpoint xe = core::read_checkpoint(p("var_xe.ckpt"));
  const core::Checkpoint cr = core::read_checkpoint(p("var_critic.ckpt"));
  const models::ModelDims dims = models::ModelDims::from_json(xe.meta.at("dims"));
  models::PolicyNet actor(dims, 0);
  core::load_params(xe.params, actor.params(), "actor.");
  models::ValueNet critic(dims, 0);
  core::load_params(cr.params, critic.params(), "critic.");
  models::PolicyNet sc_actor = actor;

  const train::TrainConfig ac_cfg = train::TrainConfig::defaults(train::Stage::ActorCritic);
  const train::TrainConfig sc_cfg = train::TrainConfig::defaults(train::Stage::SelfCritical);
  core::AdamState aopt(ac_cfg.lr.initial), copt(ac_cfg.lr.initial), sopt(sc_cfg.lr.initial);
  std::size_t episodes = 0, varying = 0, sc_episodes = 0, sc_nonconstant = 0;
  for (std::uint64_t it = 0; it < 8; ++it) {
    const auto batch = train::sample_batch(corpus.size(), ac_cfg.batch, derive_seed(51, it));
    const train::AcStats a = train::ac_step(actor, critic, aopt, copt, corpus, batch, ac_cfg,
                                            derive_seed(52, it));
    for (const auto& adv : a.advantages) {
      ++episodes;
      const auto [lo, hi] = std::minmax_element(adv.begin(), adv.end());
      if (*lo != *hi) ++varying;
    }
    const train::ScStats s = train::self_critical_step(sc_actor, sopt, corpus, batch, sc_cfg,
                                                       derive_seed(53, it));
    for (const auto& adv : s.advantages) {
      ++sc_episodes;
      if (std::any_of(adv.begin(), adv.end(), [&](double x) { return x != adv.front(); })) {
        ++sc_nonconstant;
      }
    }
  }
  const double frac = static_cast<double>(varying) / static_cast<double>(episodes);
  return {frac >= 0.10 && sc_nonconstant == 0,
          fmt("actor-critic: %zu/%zu episodes with varying advantages (%.1f%%); self-critical: %zu/%zu "
              "non-constant",
              varying, episodes, 100.0 * frac, sc_nonconstant, sc_episodes)};
}

Verdict ac_vs_sc() {
  const VarArtifacts& v = var();
  const double ac = v.ac_eval["corpus"]["cider-d"].get<double>();
  const double sc = v.sc_eval["corpus"]["cider-d"].get<double>();
  const bool comparable =
      csv_iters(p("var_ac.ckpt.csv")) == csv_iters(p("var_sc.ckpt.csv")) &&
      core::read_file(p("var_ac.ckpt.csv")).substr(0, 40) ==
          core::read_file(p("var_sc.ckpt.csv")).substr(0, 40);
  return {comparable && ac >= sc - 0.01,
          fmt("held-out CIDEr-D actor-critic %.4f, self-critical %.4f, logs %s", ac, sc,
              comparable ? "aligned" : "NOT aligned")};
}

Verdict metric_fixtures() {
  const json fx = json::parse(core::read_file(std::string(ACSEQ_FIXTURE_DIR) + "/metrics_fixture.json"));
  const json ws = json::parse(core::read_file(std::string(ACSEQ_FIXTURE_DIR) + "/metrics_worksheet.json"));
  std::map<std::string, TokenId> ids;
  auto enc = [&](const std::vector<std::string>& toks) {
    TokenSeq s;
    for (const auto& t : toks) s.ids.push_back(ids.emplace(t, kFirstWordId + ids.size()).first->second);
    s.ids.push_back(kEos);
    s.terminated = true;
    return s;
  };
  std::vector<std::string> names;
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> refs;
  for (const auto& e : fx) {
    names.push_back(e["id"]);
    cands.push_back(enc(e["candidate"].get<std::vector<std::string>>()));
    std::vector<TokenSeq> rs;
    for (const auto& r : e["refs"]) rs.push_back(enc(r.get<std::vector<std::string>>()));
    refs.push_back(std::move(rs));
  }
  const metrics::DocFreqTable df = metrics::build_doc_freq(refs);
  double worst = 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const json& w = ws["sentences"][names[i]];
    worst = std::max(worst, std::abs(metrics::bleu(cands[i], refs[i]) - w["bleu4"].get<double>()));
    worst = std::max(worst, std::abs(metrics::rouge_l(cands[i], refs[i]) - w["rouge-l"].get<double>()));
    worst = std::max(worst, std::abs(metrics::cider_d(cands[i], refs[i], df) - w["cider-d"].get<double>()));
  }
  const metrics::Metric all[] = {metrics::Metric::Bleu4, metrics::Metric::RougeL, metrics::Metric::CiderD};
  const metrics::MetricReport rep = metrics::score_corpus(names, cands, refs, all, &df, true);
  for (const char* m : {"bleu4", "rouge-l", "cider-d"}) {
    worst = std::max(worst, std::abs(rep.corpus.at(m) - ws["corpus"][m].get<double>()));
  }

  // Extremes: identity against a single reference, and a disjoint candidate.
  const TokenSeq same = enc({"a", "dog", "runs", "fast", "today"});
  const TokenSeq other = enc({"zebra", "sleeps"});
  const std::vector<TokenSeq> one{same};
  const std::vector<std::vector<TokenSeq>> docs{one, {enc({"a", "cat", "sits"})}};
  const metrics::DocFreqTable df2 = metrics::build_doc_freq(docs);
  const bool extremes = metrics::bleu(same, one) == 1.0 && metrics::rouge_l(same, one) == 1.0 &&
                        metrics::cider_d(same, one, df2) == 10.0 && metrics::bleu(other, one) == 0.0 &&
                        metrics::rouge_l(other, one) == 0.0 && metrics::cider_d(other, one, df2) == 0.0;
  return {worst <= 1e-9 && extremes,
          fmt("max |diff| vs worksheet %.2e; identity/disjoint extremes %s", worst,
              extremes ? "exact" : "WRONG")};
}

// Every command runs twice with the same arguments and output paths; the
// first run's files are moved aside and compared byte for byte.
Verdict determinism() {
  const fs::path dir = g_work / "determinism";
  const fs::path first = g_work / "determinism_first";
  fs::create_directories(dir);
  fs::create_directories(first);
  auto q = [&](const std::string& n) { return (dir / n).string(); };
  const std::string common = "--corpus " + q("c.jsonl") + " --vocab " + q("c.vocab") + " --seed 6";
  auto ac = [&](const std::string& extra) {
    must("train-ac " + common + " --iterations 40 --actor " + q("xe.ckpt") + " --critic " +
         q("cr.ckpt") + " --out " + q("ac.ckpt") + extra);
  };
  auto pass = [&] {
    must("gen-data --out " + q("c.jsonl") + " --n 300 --mode varied --seed 5");
    must("build-vocab --corpus " + q("c.jsonl") + " --out " + q("c.vocab"));
    must("train-xe " + common + " --iterations 200 --embed 16 --hidden 24 --out " + q("xe.ckpt"));
    must("pretrain-critic " + common + " --iterations 40 --actor " + q("xe.ckpt") + " --out " +
         q("cr.ckpt"));
    ac("");
    must("train-sc " + common + " --iterations 40 --actor " + q("xe.ckpt") + " --out " + q("sc.ckpt"));
  };
  const std::vector<std::string> files{"c.jsonl",    "c.vocab",     "xe.ckpt",    "xe.ckpt.csv",
                                       "cr.ckpt",    "cr.ckpt.csv", "ac.ckpt",    "ac.ckpt.csv",
                                       "sc.ckpt",    "sc.ckpt.csv", "xe.ckpt.manifest.json"};
  pass();
  for (const auto& f : files) fs::copy_file(dir / f, first / f, fs::copy_options::overwrite_existing);
  pass();
  std::vector<std::string> differ;
  for (const auto& f : files) {
    if (core::read_file(dir / f) != core::read_file(first / f)) differ.push_back(f);
  }
  // Rollout workers must not change the result either.
  ac(" --workers 3");
  for (const std::string f : {"ac.ckpt", "ac.ckpt.csv"}) {
    if (core::read_file(dir / f) != core::read_file(first / f)) differ.push_back(f + " (3 workers)");
  }
  std::string which;
  for (const auto& d : differ) which += " " + d;
  return {differ.empty(), fmt("%zu files compared across re-runs plus a 3-worker actor-critic run, "
                              "%zu differ%s",
                              files.size(), differ.size(), which.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::temp_directory_path() / "acseq_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string n;
      while (std::getline(ss, n, ',')) only.insert(std::stoi(n));
    } else {
      std::fprintf(stderr, "usage: %s [--workdir DIR] [--only N[,N...]]\n", argv[0]);
      return 2;
    }
  }
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"policy-gradient unbiasedness", unbiasedness},
      {"baseline invariance", baseline_invariance},
      {"variance reduction", variance_reduction},
      {"Q-target identity", q_identity},
      {"critic convergence", critic_convergence},
      {"XE exact match", xe_exact_match},
      {"RL improvement", rl_improvement},
      {"per-token vs per-sentence advantages", advantage_shape},
      {"actor-critic vs self-critical", ac_vs_sc},
      {"metric fixtures", metric_fixtures},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
