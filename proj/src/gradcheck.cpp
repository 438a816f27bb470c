#include "acseq/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acseq/rng.hpp"

namespace acseq::core {

GradCheckReport check_gradients(const LossFn& loss, ParamStore& store, double h, double tol,
                                std::uint64_t seed) {
  store.zero_grads();
  loss(store, true);
  std::vector<std::vector<double>> analytic(store.count());
  for (ParamId i = 0; i < store.count(); ++i) analytic[i] = store[i].grad;
  store.zero_grads();

  // Coordinates in name order, flattened.
  std::vector<std::pair<ParamId, std::size_t>> coords;
  for (const auto& [name, id] : store.names()) {
    for (std::size_t k = 0; k < store[id].size(); ++k) coords.emplace_back(id, k);
  }
  if (coords.size() > kGradCheckMaxCoords) {
    Rng rng(seed);
    for (std::size_t i = 0; i < kGradCheckMaxCoords; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(kGradCheckMaxCoords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<GradCheckEntry> by_id(store.count());
  for (ParamId i = 0; i < store.count(); ++i) by_id[i].param = store[i].name;

  for (const auto& [id, k] : coords) {
    double& w = store[id].value[k];
    const double saved = w;
    w = saved + h;
    const double up = loss(store, false);
    w = saved - h;
    const double down = loss(store, false);
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[id][k];
    const double denom = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(a - numeric) / denom;
    GradCheckEntry& e = by_id[id];
    ++e.checked;
    if (e.checked == 1 || std::isnan(rel) || rel > e.max_rel_error) {
      e.max_rel_error = rel;
      e.worst_index = k;
    }
  }
  store.zero_grads();

  GradCheckReport report;
  for (const auto& [name, id] : store.names()) {
    GradCheckEntry e = by_id[id];
    e.ok = e.max_rel_error < tol;
    report.ok = report.ok && e.ok;
    if (std::isnan(e.max_rel_error) || e.max_rel_error > report.max_rel_error) {
      report.max_rel_error = e.max_rel_error;
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace acseq::core
