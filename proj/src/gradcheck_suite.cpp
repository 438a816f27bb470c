#include "acseq/gradcheck_suite.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "acseq/mdp.hpp"
#include "acseq/models.hpp"
#include "acseq/rng.hpp"
#include "acseq/tape.hpp"
#include "acseq/training.hpp"

namespace acseq::verify {

using core::Init;
using core::NodeId;
using core::ParamStore;
using core::Tape;

namespace {

using Build = std::function<NodeId(Tape&, const ParamStore&)>;

// Loss = c . out for a fixed random c, so every output coordinate matters.
SuiteCase op_case(const std::string& name, ParamStore store, const Build& build,
                  std::uint64_t seed) {
  std::vector<double> coef;
  const core::LossFn loss = [&](ParamStore& s, bool with_grad) {
    Tape tape(s);
    const NodeId out = build(tape, s);
    const auto v = tape.value(out);
    if (coef.size() != v.size()) {
      Rng rng(derive_seed(seed, 0xC0EF));
      coef.resize(v.size());
      for (double& c : coef) c = rng.uniform(-1.0, 1.0);
    }
    double l = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) l += coef[i] * v[i];
    if (with_grad) tape.backward(out, s, coef);
    return l;
  };
  return {name, core::check_gradients(loss, store, core::kGradCheckStep, core::kGradCheckTol, seed)};
}

ParamStore store_with(std::initializer_list<std::pair<std::string, std::vector<std::uint32_t>>> ps,
                      std::uint64_t seed) {
  Rng rng(seed);
  ParamStore s;
  for (const auto& [n, shape] : ps) s.add(n, shape, Init::Uniform, &rng, 1.0);
  return s;
}

models::ModelDims unroll_dims() {
  models::ModelDims d;
  d.vocab = 6;
  d.embed = 4;
  d.hidden = 5;
  d.context = 3;
  d.min_output = kEos;
  return d;
}

// Small weights make the unrolls nearly linear; widen them so the
// nonlinearities are exercised.
template <class Net>
void widen(Net& net, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& [name, id] : net.params().names()) {
    for (double& w : net.params()[id].value) w = rng.uniform(-0.6, 0.6);
  }
}

}  // namespace

SuiteReport run_gradcheck_suite(std::uint64_t seed) {
  SuiteReport out;
  auto add = [&](SuiteCase c) { out.cases.push_back(std::move(c)); };
  auto id = [](const ParamStore& s, const char* n) { return s.id(n); };

  add(op_case("param", store_with({{"p", {5}}}, seed + 1),
              [&](Tape& t, const ParamStore& s) { return t.param(id(s, "p")); }, seed));
  add(op_case("dense", store_with({{"x", {4}}, {"w", {3, 4}}, {"b", {3}}}, seed + 2),
              [&](Tape& t, const ParamStore& s) {
                return t.dense(t.param(id(s, "x")), id(s, "w"), id(s, "b"));
              },
              seed));
  add(op_case("embedding", store_with({{"e", {5, 3}}}, seed + 3),
              [&](Tape& t, const ParamStore& s) { return t.embedding(id(s, "e"), 2); }, seed));
  add(op_case("add", store_with({{"a", {4}}, {"b", {4}}}, seed + 4),
              [&](Tape& t, const ParamStore& s) {
                return t.add(t.param(id(s, "a")), t.param(id(s, "b")));
              },
              seed));
  add(op_case("mul", store_with({{"a", {4}}, {"b", {4}}}, seed + 5),
              [&](Tape& t, const ParamStore& s) {
                return t.mul(t.param(id(s, "a")), t.param(id(s, "b")));
              },
              seed));
  add(op_case("sigmoid", store_with({{"a", {4}}}, seed + 6),
              [&](Tape& t, const ParamStore& s) { return t.sigmoid(t.param(id(s, "a"))); }, seed));
  add(op_case("tanh", store_with({{"a", {4}}}, seed + 7),
              [&](Tape& t, const ParamStore& s) { return t.tanh(t.param(id(s, "a"))); }, seed));
  add(op_case("slice", store_with({{"a", {6}}}, seed + 8),
              [&](Tape& t, const ParamStore& s) { return t.slice(t.param(id(s, "a")), 1, 3); },
              seed));
  add(op_case("softmax_xent", store_with({{"z", {5}}}, seed + 9),
              [&](Tape& t, const ParamStore& s) {
                return t.softmax_xent(t.param(id(s, "z")), 3, 0.7, 1);
              },
              seed));
  add(op_case("squared_error", store_with({{"p", {1}}}, seed + 10),
              [&](Tape& t, const ParamStore& s) {
                return t.squared_error(t.param(id(s, "p")), 0.3, 1.5);
              },
              seed));
  add(op_case("sum", store_with({{"a", {3}}, {"b", {3}}, {"c", {3}}}, seed + 11),
              [&](Tape& t, const ParamStore& s) {
                const NodeId parts[] = {t.param(id(s, "a")), t.param(id(s, "b")),
                                        t.param(id(s, "c"))};
                return t.sum(parts);
              },
              seed));

  const models::ModelDims dims = unroll_dims();
  const std::vector<double> ctx{0.9, 0.1, 0.6};
  {
    models::PolicyNet actor(dims, derive_seed(seed, 0xA));
    widen(actor, derive_seed(seed, 0xA1));
    const train::XeItem item{ctx, TokenSeq::from_ids({4, 5, kEos})};
    // The checker copies the analytic gradient before probing, so the
    // probes may accumulate into the same store.
    const core::LossFn loss = [&](ParamStore&, bool) {
      return train::accumulate_xe(actor, {&item, 1}, 3);
    };
    add({"actor-unroll", core::check_gradients(loss, actor.params(), core::kGradCheckStep,
                                               core::kGradCheckTol, seed)});
  }
  {
    models::ValueNet critic(dims, derive_seed(seed, 0xC));
    widen(critic, derive_seed(seed, 0xC1));
    mdp::Episode ep;
    ep.ctx = ctx;
    ep.actions = TokenSeq::from_ids({5, 4, kEos});
    ep.gamma = 0.9;
    ep.set_reward(0.75);
    const core::LossFn loss = [&](ParamStore&, bool) {
      mdp::Episode copy = ep;
      return train::accumulate_critic_regression(critic, {&copy, 1}, 1.0);
    };
    add({"critic-unroll", core::check_gradients(loss, critic.params(), core::kGradCheckStep,
                                                core::kGradCheckTol, seed)});
  }

  for (const SuiteCase& c : out.cases) {
    out.ok = out.ok && c.report.ok;
    if (std::isnan(c.report.max_rel_error) || c.report.max_rel_error > out.max_rel_error) {
      out.max_rel_error = c.report.max_rel_error;
    }
  }
  return out;
}

std::string SuiteReport::to_text() const {
  std::string s;
  char buf[256];
  for (const SuiteCase& c : cases) {
    for (const auto& e : c.report.entries) {
      std::snprintf(buf, sizeof buf, "%-14s %-22s coords %5zu  max rel err %.3e  %s\n",
                    c.name.c_str(), e.param.c_str(), e.checked, e.max_rel_error,
                    e.ok ? "ok" : "FAIL");
      s += buf;
    }
  }
  std::snprintf(buf, sizeof buf, "gradcheck %s: max rel err %.3e (tol %.0e)\n",
                ok ? "passed" : "FAILED", max_rel_error, core::kGradCheckTol);
  s += buf;
  return s;
}

}  // namespace acseq::verify
