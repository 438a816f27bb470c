#include "acseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "acseq/errors.hpp"

namespace acseq::metrics {

namespace {

void check_order(int max_order) {
  if (max_order < 1 || max_order > kMaxOrder) {
    throw InvalidArgument("max_order must be in [1, 4]");
  }
}

// Sums in ascending value order so the result does not depend on how the
// terms were enumerated (relabeling token ids permutes the n-gram order).
double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

using CountVec = std::vector<std::pair<NGramKey, std::uint32_t>>;

CountVec count_order(std::span<const TokenId> body, int n) {
  CountVec out;
  if (body.size() < static_cast<std::size_t>(n)) return out;
  std::vector<NGramKey> keys;
  keys.reserve(body.size() - n + 1);
  for (std::size_t i = 0; i + n <= body.size(); ++i) keys.push_back(pack_ngram(body.subspan(i, n)));
  std::sort(keys.begin(), keys.end());
  for (NGramKey k : keys) {
    if (!out.empty() && out.back().first == k) {
      ++out.back().second;
    } else {
      out.emplace_back(k, 1u);
    }
  }
  return out;
}

std::uint32_t lookup(const CountVec& v, NGramKey k) {
  auto it = std::lower_bound(v.begin(), v.end(), k,
                             [](const auto& e, NGramKey key) { return e.first < key; });
  return (it != v.end() && it->first == k) ? it->second : 0u;
}

}  // namespace

NGramKey pack_ngram(std::span<const TokenId> gram) {
  if (gram.empty() || gram.size() > kMaxOrder) throw InvalidArgument("n-gram order must be 1..4");
  NGramKey key = 0;
  for (TokenId t : gram) {
    if (t > 0xFFFFu) throw InvalidArgument("token id exceeds 16-bit n-gram packing");
    key = (key << 16) | t;
  }
  return key;
}

std::uint32_t NGramCounts::count(std::span<const TokenId> gram) const {
  const int n = static_cast<int>(gram.size());
  if (n < 1 || n > max_order) return 0;
  return lookup(orders[n - 1], pack_ngram(gram));
}

std::uint64_t NGramCounts::total(int order) const {
  if (order < 1 || order > max_order) return 0;
  std::uint64_t t = 0;
  for (const auto& [k, c] : orders[order - 1]) t += c;
  return t;
}

NGramCounts count_ngrams(const TokenSeq& seq, int max_order) {
  check_order(max_order);
  const TokenSeq clean = TokenSeq::from_raw(seq.ids);
  NGramCounts counts;
  counts.max_order = max_order;
  for (int n = 1; n <= max_order; ++n) counts.orders[n - 1] = count_order(clean.body(), n);
  return counts;
}

// ------------------------------------------------------------ doc freq

std::uint32_t DocFreqTable::df(int order, NGramKey key) const {
  if (order < 1 || order > kMaxOrder) return 0;
  const auto& t = tables_[order - 1];
  auto it = t.find(key);
  return it == t.end() ? 0u : it->second;
}

std::uint32_t DocFreqTable::df(std::span<const TokenId> gram) const {
  return df(static_cast<int>(gram.size()), pack_ngram(gram));
}

std::vector<std::pair<NGramKey, std::uint32_t>> DocFreqTable::entries(int order) const {
  check_order(order);
  std::vector<std::pair<NGramKey, std::uint32_t>> out(tables_[order - 1].begin(),
                                                      tables_[order - 1].end());
  std::sort(out.begin(), out.end());
  return out;
}

DocFreqTable build_doc_freq(std::span<const std::vector<TokenSeq>> corpus_refs) {
  if (corpus_refs.empty()) throw InvalidArgument("build_doc_freq: empty corpus");
  DocFreqTable table;
  table.corpus_size_ = corpus_refs.size();
  for (const auto& refs : corpus_refs) {
    std::vector<NGramCounts> counts;
    counts.reserve(refs.size());
    for (const auto& ref : refs) counts.push_back(count_ngrams(ref, kMaxOrder));
    for (int n = 1; n <= kMaxOrder; ++n) {
      std::set<NGramKey> seen;
      for (const auto& c : counts) {
        for (const auto& [k, tf] : c.orders[n - 1]) seen.insert(k);
      }
      for (NGramKey k : seen) ++table.tables_[n - 1][k];
    }
  }
  return table;
}

// ---------------------------------------------------------------- BLEU

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int i = 0; i < kMaxOrder; ++i) {
    matches[i] += o.matches[i];
    totals[i] += o.totals[i];
  }
  cand_len += o.cand_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(const TokenSeq& candidate, std::span<const TokenSeq> refs, int max_order) {
  check_order(max_order);
  if (refs.empty()) throw InvalidArgument("bleu: empty reference list");
  const NGramCounts cand = count_ngrams(candidate, max_order);
  std::vector<NGramCounts> ref_counts;
  ref_counts.reserve(refs.size());
  for (const auto& r : refs) ref_counts.push_back(count_ngrams(r, max_order));

  BleuStats s;
  s.cand_len = cand.total(1);
  std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t best_diff = std::numeric_limits<std::uint64_t>::max();
  for (const auto& r : ref_counts) {
    const std::uint64_t len = r.total(1);
    const std::uint64_t diff = len > s.cand_len ? len - s.cand_len : s.cand_len - len;
    if (diff < best_diff || (diff == best_diff && len < best)) {
      best = len;
      best_diff = diff;
    }
  }
  s.ref_len = best;

  for (int n = 1; n <= max_order; ++n) {
    std::uint64_t matched = 0;
    for (const auto& [k, c] : cand.orders[n - 1]) {
      std::uint32_t max_ref = 0;
      for (const auto& r : ref_counts) max_ref = std::max(max_ref, lookup(r.orders[n - 1], k));
      matched += std::min(c, max_ref);
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = cand.total(n);
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, int max_order, bool smooth) {
  check_order(max_order);
  if (s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_order; ++n) {
    double m = static_cast<double>(s.matches[n - 1]);
    double t = static_cast<double>(s.totals[n - 1]);
    if (smooth && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = s.cand_len >= s.ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(s.ref_len) /
                                             static_cast<double>(s.cand_len));
  return bp * std::exp(log_sum / max_order);
}

double bleu(const TokenSeq& candidate, std::span<const TokenSeq> refs, int max_order,
            bool smooth) {
  return bleu_from_stats(bleu_stats(candidate, refs, max_order), max_order, smooth);
}

double corpus_bleu(std::span<const TokenSeq> candidates,
                   std::span<const std::vector<TokenSeq>> refs, int max_order, bool smooth) {
  if (candidates.size() != refs.size()) {
    throw InvalidArgument("corpus_bleu: candidate and reference counts differ");
  }
  BleuStats total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    total += bleu_stats(candidates[i], refs[i], max_order);
  }
  return bleu_from_stats(total, max_order, smooth);
}

// ------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSeq& candidate, std::span<const TokenSeq> refs, double beta) {
  if (refs.empty()) throw InvalidArgument("rouge_l: empty reference list");
  const TokenSeq cand = TokenSeq::from_raw(candidate.ids);
  const auto c = cand.body();
  double best = 0.0;
  for (const auto& r_raw : refs) {
    const TokenSeq ref = TokenSeq::from_raw(r_raw.ids);
    const auto r = ref.body();
    if (c.empty() || r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(c.size());
    const double rec = lcs / static_cast<double>(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

// ------------------------------------------------------------- CIDEr-D

CiderD::CiderD(std::shared_ptr<const DocFreqTable> df, double sigma)
    : df_(std::move(df)), sigma_(sigma) {
  if (!df_ || df_->empty()) throw InvalidState("CIDEr-D requires a non-empty document-frequency table");
  log_corpus_ = std::log(static_cast<double>(df_->corpus_size()));
}

CiderD::TfIdf CiderD::vectorize(const TokenSeq& seq) const {
  const NGramCounts counts = count_ngrams(seq, kMaxOrder);
  TfIdf out;
  out.length = static_cast<double>(counts.total(1));
  for (int n = 1; n <= kMaxOrder; ++n) {
    std::vector<double> squares;
    for (const auto& [k, tf] : counts.orders[n - 1]) {
      const double df = std::max(1.0, static_cast<double>(df_->df(n, k)));
      const double w = static_cast<double>(tf) * (log_corpus_ - std::log(df));
      out.vec[n - 1].emplace_back(k, w);
      squares.push_back(w * w);
    }
    out.norm[n - 1] = std::sqrt(order_free_sum(squares));
  }
  return out;
}

CiderD::Prepared CiderD::prepare(std::span<const TokenSeq> refs) const {
  Prepared p;
  p.reserve(refs.size());
  for (const auto& r : refs) p.push_back(vectorize(r));
  return p;
}

double CiderD::score(const TokenSeq& candidate, const Prepared& refs) const {
  if (refs.empty()) throw InvalidArgument("cider_d: empty reference list");
  const TfIdf hyp = vectorize(candidate);
  std::array<double, kMaxOrder> acc{};
  std::vector<double> terms;
  for (const TfIdf& ref : refs) {
    const double delta = hyp.length - ref.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
    for (int n = 0; n < kMaxOrder; ++n) {
      terms.clear();
      const auto& hv = hyp.vec[n];
      const auto& rv = ref.vec[n];
      std::size_t i = 0, j = 0;
      while (i < hv.size() && j < rv.size()) {
        if (hv[i].first < rv[j].first) {
          ++i;
        } else if (rv[j].first < hv[i].first) {
          ++j;
        } else {
          terms.push_back(std::min(hv[i].second, rv[j].second) * rv[j].second);
          ++i;
          ++j;
        }
      }
      double val = order_free_sum(terms);
      if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
      acc[n] += val * penalty;
    }
  }
  double mean = 0.0;
  for (double v : acc) mean += v;
  mean /= kMaxOrder;
  mean /= static_cast<double>(refs.size());
  return std::clamp(mean * 10.0, 0.0, 10.0);
}

double CiderD::score(const TokenSeq& candidate, std::span<const TokenSeq> refs) const {
  return score(candidate, prepare(refs));
}

double cider_d(const TokenSeq& candidate, std::span<const TokenSeq> refs, const DocFreqTable& df) {
  CiderD scorer(std::make_shared<const DocFreqTable>(df));
  return scorer.score(candidate, refs);
}

// ------------------------------------------------------------ selection

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Bleu4: return "bleu4";
    case Metric::RougeL: return "rouge-l";
    case Metric::CiderD: return "cider-d";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "bleu4") return Metric::Bleu4;
  if (name == "rouge-l") return Metric::RougeL;
  if (name == "cider-d") return Metric::CiderD;
  throw InvalidArgument("unknown metric '" + std::string(name) + "' (bleu4|rouge-l|cider-d)");
}

Scorer::Scorer(Metric metric, std::shared_ptr<const DocFreqTable> df) : metric_(metric) {
  if (metric == Metric::CiderD) {
    if (!df) throw InvalidArgument("CIDEr-D reward requires a document-frequency table");
    cider_.emplace(std::move(df));
  }
}

double Scorer::operator()(const TokenSeq& candidate, std::span<const TokenSeq> refs) const {
  return (*this)(candidate, refs, nullptr);
}

double Scorer::operator()(const TokenSeq& candidate, std::span<const TokenSeq> refs,
                          const CiderD::Prepared* prepared) const {
  switch (metric_) {
    case Metric::Bleu4: return bleu(candidate, refs, 4, true);
    case Metric::RougeL: return rouge_l(candidate, refs);
    case Metric::CiderD: return prepared ? cider_->score(candidate, *prepared) : cider_->score(candidate, refs);
  }
  return 0.0;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["sentences"] = nlohmann::ordered_json::array();
  for (const auto& s : sentences) {
    nlohmann::ordered_json row;
    row["id"] = s.id;
    nlohmann::ordered_json scores = nlohmann::ordered_json::object();
    for (const auto& [name, v] : s.scores) scores[name] = v;
    row["scores"] = std::move(scores);
    j["sentences"].push_back(std::move(row));
  }
  nlohmann::ordered_json corp = nlohmann::ordered_json::object();
  for (const auto& [name, v] : corpus) corp[name] = v;
  j["corpus"] = std::move(corp);
  return j.dump(2);
}

MetricReport score_corpus(std::span<const std::string> ids, std::span<const TokenSeq> candidates,
                          std::span<const std::vector<TokenSeq>> refs,
                          std::span<const Metric> metrics, const DocFreqTable* df,
                          bool corpus_level) {
  if (ids.size() != candidates.size() || candidates.size() != refs.size()) {
    throw InvalidArgument("score_corpus: ids, candidates and references must align");
  }
  std::optional<CiderD> cider;
  for (Metric m : metrics) {
    if (m == Metric::CiderD && !cider) {
      if (!df) throw InvalidArgument("CIDEr-D requires a document-frequency table");
      cider.emplace(std::make_shared<const DocFreqTable>(*df));
    }
  }
  MetricReport report;
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    MetricReport::Sentence row{ids[i], {}};
    for (Metric m : metrics) {
      double v = 0.0;
      switch (m) {
        case Metric::Bleu4: v = bleu(candidates[i], refs[i], 4, true); break;
        case Metric::RougeL: v = rouge_l(candidates[i], refs[i]); break;
        case Metric::CiderD: v = cider->score(candidates[i], refs[i]); break;
      }
      row.scores.emplace_back(std::string(metric_name(m)), v);
      sums[std::string(metric_name(m))] += v;
    }
    report.sentences.push_back(std::move(row));
  }
  if (corpus_level && !candidates.empty()) {
    for (Metric m : metrics) {
      const std::string name(metric_name(m));
      report.corpus[name] = m == Metric::Bleu4
                                ? corpus_bleu(candidates, refs, 4, false)
                                : sums[name] / static_cast<double>(candidates.size());
    }
  }
  return report;
}

}  // namespace acseq::metrics
