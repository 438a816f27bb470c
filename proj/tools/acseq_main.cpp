// acseq: data generation, staged training, evaluation and verification.
//
// Exit codes: 0 ok, 1 gradcheck failure or internal error, 2 configuration
// error, 3 missing prerequisite stage, 4 training diverged, 5 vocabulary
// hash mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "acseq/checkpoint.hpp"
#include "acseq/errors.hpp"
#include "acseq/gradcheck_suite.hpp"
#include "acseq/hashing.hpp"
#include "acseq/log.hpp"
#include "acseq/metrics.hpp"
#include "acseq/simd/kernels.hpp"
#include "acseq/synth.hpp"
#include "acseq/tape.hpp"
#include "acseq/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace acseq::cli {
namespace {

constexpr const char* kVersion = ACSEQ_VERSION;

enum Exit { kOk = 0, kFail = 1, kConfig = 2, kPrereq = 3, kDiverged = 4, kVocabMismatch = 5 };

class VocabMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<metrics::Metric> parse_metrics(const std::string& list) {
  std::vector<metrics::Metric> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(metrics::parse_metric(item));
  }
  if (out.empty()) throw InvalidArgument("no metrics selected");
  return out;
}

data::Vocabulary load_vocab(const fs::path& p) { return data::Vocabulary::parse(core::read_file(p)); }

std::vector<data::CaptionRecord> load_corpus(const fs::path& p) {
  auto c = data::read_corpus(p);
  if (c.empty()) throw InvalidArgument("corpus " + p.string() + " is empty");
  return c;
}

core::Checkpoint load_checkpoint(const fs::path& p, const data::Vocabulary& vocab) {
  if (!fs::exists(p)) throw InvalidState("checkpoint " + p.string() + " does not exist");
  core::Checkpoint ck = core::read_checkpoint(p);
  const std::string have = ck.meta.value("vocab_hash", "");
  if (have != vocab.hash()) {
    throw VocabMismatch("checkpoint " + p.string() + " was trained with vocabulary " + have +
                        ", given vocabulary hashes to " + vocab.hash());
  }
  return ck;
}

models::ModelDims dims_of(const core::Checkpoint& ck) {
  return models::ModelDims::from_json(ck.meta.at("dims"));
}

models::PolicyNet actor_from(const core::Checkpoint& ck) {
  models::PolicyNet net(dims_of(ck), 0);
  core::load_params(ck.params, net.params(), "actor.");
  return net;
}

models::ValueNet critic_from(const core::Checkpoint& ck) {
  models::ValueNet net(dims_of(ck), 0);
  core::load_params(ck.params, net.params(), "critic.");
  return net;
}

// ------------------------------------------------------------ gen-data

struct GenArgs {
  std::string out;
  std::size_t n = 2000;
  data::TaskSpec spec;
  std::string mode = "varied";
};

int run_gen(const GenArgs& a) {
  data::TaskSpec spec = a.spec;
  spec.mode = data::parse_mode(a.mode);
  const auto corpus = data::generate_corpus(spec, a.n);
  data::write_corpus(a.out, corpus);
  spdlog::info("wrote {} records to {}", corpus.size(), a.out);
  return kOk;
}

// --------------------------------------------------------- build-vocab

struct VocabArgs {
  std::string corpus, out;
  std::size_t min_count = 1;
  std::size_t max_size = 65535;
};

int run_vocab(const VocabArgs& a) {
  const auto v = data::build_vocab(load_corpus(a.corpus), a.min_count, a.max_size);
  core::write_file_atomic(a.out, v.serialize());
  spdlog::info("vocabulary of {} tokens, hash {}", v.size(), v.hash());
  return kOk;
}

// --------------------------------------------------------------- train

struct TrainArgs {
  train::Stage stage = train::Stage::Xe;
  std::string corpus, vocab, out, log, manifest, actor, critic, dump;
  std::string reward = "cider-d";
  std::size_t embed = 64, hidden = 64;
  train::TrainConfig cfg;
};

void add_train_options(CLI::App* sub, TrainArgs& a) {
  sub->add_option("--corpus", a.corpus, "Training corpus (JSONL)")->required();
  sub->add_option("--vocab", a.vocab, "Vocabulary file")->required();
  sub->add_option("--out", a.out, "Output checkpoint")->required();
  sub->add_option("--log", a.log, "Reward log CSV (default <out>.csv)");
  sub->add_option("--manifest", a.manifest, "Run manifest (default <out>.manifest.json)");
  sub->add_option("--iterations", a.cfg.iterations);
  sub->add_option("--batch", a.cfg.batch);
  sub->add_option("--lr", a.cfg.lr.initial, "Initial learning rate");
  sub->add_option("--lr-decay-step", a.cfg.lr.decay_step, "Iteration at which the rate decays");
  sub->add_option("--lr-decayed", a.cfg.lr.decayed, "Learning rate after the decay step");
  sub->add_option("--max-len", a.cfg.max_len, "Maximum episode / reference length");
  sub->add_option("--seed", a.cfg.seed);
  sub->add_option("--workers", a.cfg.workers, "Parallel rollout workers");
  sub->add_option("--log-every", a.cfg.log_every);
  sub->add_option("--clip", a.cfg.clip_norm, "Global gradient-norm clip");
  sub->add_flag("--log-timing", a.cfg.log_timing, "Record wall-clock ms in the reward log");
  sub->add_option("--dump-episodes", a.dump, "Directory for logged episodes (episodes.jsonl)");
}

std::string hash_or_null(const std::string& path) {
  return path.empty() || !fs::exists(path) ? std::string() : file_git_hash(path);
}

int run_train(TrainArgs a, const std::string& command) {
  train::TrainConfig& cfg = a.cfg;
  cfg.stage = a.stage;
  cfg.reward = metrics::parse_metric(a.reward);
  cfg.validate();
  if (a.log.empty()) a.log = a.out + ".csv";
  if (a.manifest.empty()) a.manifest = a.out + ".manifest.json";

  const data::Vocabulary vocab = load_vocab(a.vocab);
  const auto records = load_corpus(a.corpus);
  for (const auto& r : records) {
    for (const auto& ref : r.refs) {
      for (const auto& tok : ref) {
        if (!vocab.contains(tok)) spdlog::debug("record {}: token {} not in vocabulary", r.id, tok);
      }
    }
  }
  const train::TrainCorpus corpus = train::TrainCorpus::from_records(records, vocab, cfg.reward);

  ordered_json manifest;
  manifest["tool"] = "acseq";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["seed"] = cfg.seed;
  manifest["config"] = cfg.to_json();
  manifest["corpus"] = {{"path", a.corpus}, {"hash", file_git_hash(a.corpus)}};
  manifest["vocab"] = {{"path", a.vocab}, {"hash", vocab.hash()}};
  manifest["lineage"] = {{"actor", {{"path", a.actor}, {"hash", hash_or_null(a.actor)}}},
                         {"critic", {{"path", a.critic}, {"hash", hash_or_null(a.critic)}}}};
  manifest["outputs"] = {{"checkpoint", a.out}, {"log", a.log}};
  core::write_file_atomic(a.manifest, manifest.dump(2) + "\n");

  std::optional<models::PolicyNet> actor;
  std::optional<models::ValueNet> critic;
  if (!a.actor.empty()) actor.emplace(actor_from(load_checkpoint(a.actor, vocab)));
  if (!a.critic.empty()) critic.emplace(critic_from(load_checkpoint(a.critic, vocab)));

  models::ModelDims dims;
  dims.vocab = vocab.size();
  dims.embed = a.embed;
  dims.hidden = a.hidden;
  dims.context = corpus.context_dim();
  if (actor) dims = actor->dims();

  std::string dump;
  train::StageHooks hooks;
  if (!a.dump.empty()) {
    hooks.on_episodes = [&dump](std::size_t iter, std::span<const mdp::Episode> eps) {
      for (const auto& ep : eps) {
        json line{{"iter", iter}, {"episode", ep.to_json()}};
        dump += line.dump() + "\n";
      }
    };
  }

  spdlog::info("{}: {} iterations, batch {}, seed {}", train::stage_name(cfg.stage),
               cfg.iterations, cfg.batch, cfg.seed);
  std::optional<train::StageResult> res;
  try {
    res.emplace(train::run_stage(cfg, corpus, std::move(actor), std::move(critic), dims, hooks));
  } catch (const train::EpisodesDiverged& e) {
    const fs::path dir = a.dump.empty() ? fs::path(a.out + ".episodes") : fs::path(a.dump);
    fs::create_directories(dir);
    if (!dump.empty()) core::write_file_atomic(dir / "episodes.jsonl", dump);
    const json d{{"diverged", e.what()}, {"where", e.where()}, {"episodes", e.episodes()}};
    core::write_file_atomic(dir / "diverged.json", d.dump() + "\n");
    spdlog::error("episode dump written to {}", dir.string());
    throw;
  }
  if (!a.dump.empty()) {
    fs::create_directories(a.dump);
    core::write_file_atomic(fs::path(a.dump) / "episodes.jsonl", dump);
  }

  json meta;
  meta["format"] = "acseq-checkpoint";
  meta["version"] = kVersion;
  meta["stage"] = train::stage_name(cfg.stage);
  meta["step"] = cfg.iterations;
  meta["dims"] = res->actor.dims().to_json();
  meta["vocab_hash"] = vocab.hash();
  meta["corpus_hash"] = file_git_hash(a.corpus);
  meta["config"] = cfg.to_json();
  meta["parents"] = {{"actor", hash_or_null(a.actor)}, {"critic", hash_or_null(a.critic)}};
  meta["manifest"] = fs::path(a.manifest).filename().string();

  std::vector<const core::ParamStore*> stores;
  if (cfg.stage != train::Stage::CriticPretrain) stores.push_back(&res->actor.params());
  if (res->critic) stores.push_back(&res->critic->params());
  core::write_checkpoint(a.out, meta, stores);
  core::write_file_atomic(a.log, res->log.to_csv());
  spdlog::info("checkpoint {} ({}), reward log {}", a.out, file_git_hash(a.out), a.log);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, corpus, vocab, out, captions;
  std::string metrics = "bleu4,rouge-l,cider-d";
  std::string decode = "greedy";
  std::size_t max_len = 16;
};

void print_corpus(const metrics::MetricReport& r) {
  for (const auto& [name, v] : r.corpus) std::printf("%-8s %.6f\n", name.c_str(), v);
}

int run_eval(const EvalArgs& a) {
  if (a.decode != "greedy") throw InvalidArgument("only greedy decoding is supported");
  const auto ms = parse_metrics(a.metrics);
  const data::Vocabulary vocab = load_vocab(a.vocab);
  const auto records = load_corpus(a.corpus);
  const models::PolicyNet actor = actor_from(load_checkpoint(a.ckpt, vocab));
  const train::EvalResult res = train::evaluate(actor, records, vocab, a.max_len, ms);
  print_corpus(res.report);
  if (!a.out.empty()) core::write_file_atomic(a.out, res.report.to_json() + "\n");
  if (!a.captions.empty()) {
    std::string lines;
    for (std::size_t i = 0; i < records.size(); ++i) {
      ordered_json j;
      j["id"] = records[i].id;
      j["caption"] = data::decode(res.captions[i], vocab);
      lines += j.dump() + "\n";
    }
    core::write_file_atomic(a.captions, lines);
  }
  return kOk;
}

// --------------------------------------------------------------- score

struct ScoreArgs {
  std::string cands, refs, out;
  std::string metrics = "bleu4,rouge-l,cider-d";
  bool corpus_level = false;
};

int run_score(const ScoreArgs& a) {
  const auto ms = parse_metrics(a.metrics);
  const auto refs = load_corpus(a.refs);
  std::map<std::string, std::vector<std::string>> cands;
  {
    std::ifstream in(a.cands);
    if (!in) throw InvalidArgument("cannot read " + a.cands);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        // Either {"id", "caption"} or a corpus record whose first reference
        // is the candidate.
        const json j = json::parse(line);
        const json& c = j.contains("caption") ? j.at("caption") : j.at("refs").at(0);
        cands[j.at("id").get<std::string>()] = c.get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed candidate line: ") + e.what());
      }
    }
  }
  // Token ids only need to be consistent within this run; the metrics do
  // not depend on the labelling.
  std::vector<data::CaptionRecord> all = refs;
  for (const auto& [id, c] : cands) all.push_back({id, {}, {c}});
  const data::Vocabulary vocab = data::build_vocab(all);

  std::vector<std::string> ids;
  std::vector<TokenSeq> cand_seqs;
  std::vector<std::vector<TokenSeq>> ref_seqs;
  for (const auto& r : refs) {
    auto it = cands.find(r.id);
    if (it == cands.end()) throw InvalidArgument("no candidate for id " + r.id);
    ids.push_back(r.id);
    cand_seqs.push_back(data::encode(it->second, vocab));
    ref_seqs.push_back(data::encode_refs(r, vocab));
  }
  const metrics::DocFreqTable df = metrics::build_doc_freq(ref_seqs);
  const auto report = metrics::score_corpus(ids, cand_seqs, ref_seqs, ms, &df, a.corpus_level);
  std::printf("%s\n", report.to_json().c_str());
  if (!a.out.empty()) core::write_file_atomic(a.out, report.to_json() + "\n");
  return kOk;
}

// ----------------------------------------------------------- gradcheck

struct GradArgs {
  std::string fault;
  std::uint64_t seed = 0;
};

int run_gradcheck(const GradArgs& a) {
  if (!a.fault.empty()) {
    const auto op = core::parse_op(a.fault);
    if (!op) throw InvalidArgument("unknown op for --inject-fault: " + a.fault);
    core::testing::set_backward_fault(op);
  }
  const verify::SuiteReport rep = verify::run_gradcheck_suite(a.seed);
  std::fputs(rep.to_text().c_str(), stdout);
  if (rep.ok) return kOk;
  std::string failing;
  for (const auto& c : rep.cases) {
    if (!c.report.ok) failing += (failing.empty() ? "" : ", ") + c.name;
  }
  std::fprintf(stderr, "gradient check failed in: %s\n", failing.c_str());
  return kFail;
}

int main_impl(int argc, char** argv) {
  CLI::App app{"Actor-critic sequence training on synthetic captioning tasks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::string kernels;
  app.add_option("--kernels", kernels, "Kernel variant: auto|scalar|avx2");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic captioning corpus");
  g->add_option("--out", gen.out)->required();
  g->add_option("--n", gen.n);
  g->add_option("--attrs", gen.spec.attributes);
  g->add_option("--per-example", gen.spec.per_example);
  g->add_option("--refs", gen.spec.refs);
  g->add_option("--mode", gen.mode, "deterministic|varied");
  g->add_option("--noise", gen.spec.noise);
  g->add_option("--grammar", gen.spec.grammar);
  g->add_option("--synonyms", gen.spec.synonyms);
  g->add_option("--seed", gen.spec.seed);

  VocabArgs voc;
  auto* v = app.add_subcommand("build-vocab", "Build a vocabulary from a corpus");
  v->add_option("--corpus", voc.corpus)->required();
  v->add_option("--out", voc.out)->required();
  v->add_option("--min-count", voc.min_count);
  v->add_option("--max-size", voc.max_size);

  TrainArgs xe, cp, ac, sc;
  xe.stage = train::Stage::Xe;
  cp.stage = train::Stage::CriticPretrain;
  ac.stage = train::Stage::ActorCritic;
  sc.stage = train::Stage::SelfCritical;
  for (TrainArgs* t : {&xe, &cp, &ac, &sc}) t->cfg = train::TrainConfig::defaults(t->stage);

  auto* txe = app.add_subcommand("train-xe", "Stage 1: cross-entropy pretraining of the actor");
  add_train_options(txe, xe);
  txe->add_option("--actor", xe.actor, "Continue from this actor checkpoint");
  txe->add_option("--embed", xe.embed);
  txe->add_option("--hidden", xe.hidden);

  auto* tcp = app.add_subcommand("pretrain-critic", "Stage 2: critic regression with a frozen actor");
  add_train_options(tcp, cp);
  tcp->add_option("--actor", cp.actor, "XE-pretrained actor checkpoint");
  tcp->add_option("--reward", cp.reward, "bleu4|rouge-l|cider-d");
  tcp->add_option("--gamma", cp.cfg.gamma);

  auto* tac = app.add_subcommand("train-ac", "Stage 3: joint actor-critic training");
  add_train_options(tac, ac);
  tac->add_option("--actor", ac.actor, "XE-pretrained actor checkpoint");
  tac->add_option("--critic", ac.critic, "Pretrained critic checkpoint");
  tac->add_option("--reward", ac.reward, "bleu4|rouge-l|cider-d");
  tac->add_option("--gamma", ac.cfg.gamma);
  tac->add_option("--critic-weight", ac.cfg.critic_weight);

  auto* tsc = app.add_subcommand("train-sc", "Self-critical baseline training");
  add_train_options(tsc, sc);
  tsc->add_option("--actor", sc.actor, "XE-pretrained actor checkpoint");
  tsc->add_option("--reward", sc.reward, "bleu4|rouge-l|cider-d");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Greedy-decode a corpus and report metrics");
  e->add_option("--ckpt", ev.ckpt)->required();
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--vocab", ev.vocab)->required();
  e->add_option("--metrics", ev.metrics, "Comma-separated: bleu4,rouge-l,cider-d");
  e->add_option("--decode", ev.decode, "Decoding mode (greedy)");
  e->add_option("--max-len", ev.max_len);
  e->add_option("--out", ev.out, "Report JSON");
  e->add_option("--captions", ev.captions, "Decoded captions (JSONL)");

  ScoreArgs scr;
  auto* s = app.add_subcommand("score", "Score candidate captions against references");
  s->add_option("--cand,--cands", scr.cands, "Candidates: JSONL {\"id\", \"caption\"} or corpus records")
      ->required();
  s->add_option("--refs", scr.refs, "Reference corpus (JSONL)")->required();
  s->add_option("--metric,--metrics", scr.metrics, "Comma-separated: bleu4,rouge-l,cider-d");
  s->add_flag("--corpus-level", scr.corpus_level, "Add corpus-level scores to the report");
  s->add_option("--out", scr.out, "Report JSON");

  GradArgs gc;
  auto* gcs = app.add_subcommand("gradcheck", "Finite-difference check of every op and unroll");
  gcs->add_option("--inject-fault", gc.fault, "Corrupt the backward rule of this op");
  gcs->add_option("--seed", gc.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kConfig;
  }

  init_logging();
  if (!kernels.empty()) {
    simd::Variant var = simd::Variant::Scalar;
    if (kernels == "avx2") {
      var = simd::Variant::Avx2;
    } else if (kernels == "auto") {
      var = simd::variant_supported(simd::Variant::Avx2) ? simd::Variant::Avx2 : simd::Variant::Scalar;
    } else if (kernels != "scalar") {
      throw InvalidArgument("--kernels must be auto, scalar or avx2");
    }
    simd::set_active_variant(var);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "gen-data") return run_gen(gen);
  if (cmd == "build-vocab") return run_vocab(voc);
  if (cmd == "train-xe") return run_train(xe, cmd);
  if (cmd == "pretrain-critic") return run_train(cp, cmd);
  if (cmd == "train-ac") return run_train(ac, cmd);
  if (cmd == "train-sc") return run_train(sc, cmd);
  if (cmd == "eval") return run_eval(ev);
  if (cmd == "score") return run_score(scr);
  return run_gradcheck(gc);
}

}  // namespace
}  // namespace acseq::cli

int main(int argc, char** argv) {
  using namespace acseq;
  try {
    return cli::main_impl(argc, argv);
  } catch (const cli::VocabMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kVocabMismatch;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: training diverged at %s: %s\n", e.where().c_str(), e.what());
    return cli::kDiverged;
  } catch (const InvalidState& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kPrereq;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return cli::kFail;
  }
}
