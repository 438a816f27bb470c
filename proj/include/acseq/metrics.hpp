#pragma once

// N-gram sequence metrics over token ids: BLEU-n, ROUGE-L and CIDEr-D.
// All scorers strip EOS/PAD/BOS from their inputs and are immutable, so they
// may be shared between threads once constructed.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "acseq/token.hpp"

namespace acseq::metrics {

inline constexpr int kMaxOrder = 4;

/// An n-gram of order <= 4 packed as 16 bits per token. Keys are only
/// comparable within one order.
using NGramKey = std::uint64_t;

NGramKey pack_ngram(std::span<const TokenId> gram);

/// Per-order n-gram multiset, each order sorted by key.
struct NGramCounts {
  int max_order = 0;
  std::array<std::vector<std::pair<NGramKey, std::uint32_t>>, kMaxOrder> orders;

  /// Occurrences of `gram` (order = gram.size()).
  std::uint32_t count(std::span<const TokenId> gram) const;
  std::uint64_t total(int order) const;
};

/// Counts the contiguous n-grams of the sequence body for orders 1..max_order.
NGramCounts count_ngrams(const TokenSeq& seq, int max_order);

/// Document frequencies over a reference corpus: df(g) is the number of
/// reference sets in which g occurs in at least one reference.
class DocFreqTable {
 public:
  std::uint32_t df(int order, NGramKey key) const;
  std::uint32_t df(std::span<const TokenId> gram) const;
  std::size_t corpus_size() const { return corpus_size_; }
  bool empty() const { return corpus_size_ == 0; }
  /// Entries of one order, sorted by key.
  std::vector<std::pair<NGramKey, std::uint32_t>> entries(int order) const;

 private:
  friend DocFreqTable build_doc_freq(std::span<const std::vector<TokenSeq>> corpus_refs);
  std::array<std::unordered_map<NGramKey, std::uint32_t>, kMaxOrder> tables_;
  std::size_t corpus_size_ = 0;
};

DocFreqTable build_doc_freq(std::span<const std::vector<TokenSeq>> corpus_refs);

// ---------------------------------------------------------------- BLEU

struct BleuStats {
  std::array<std::uint64_t, kMaxOrder> matches{};
  std::array<std::uint64_t, kMaxOrder> totals{};
  std::uint64_t cand_len = 0;
  std::uint64_t ref_len = 0;  // closest reference length

  BleuStats& operator+=(const BleuStats& o);
};

/// Clipped n-gram matches against the refs; ties on closest reference
/// length go to the shorter reference.
BleuStats bleu_stats(const TokenSeq& candidate, std::span<const TokenSeq> refs, int max_order);

/// Geometric mean of modified precisions times brevity penalty. With
/// `smooth`, orders >= 2 use (matches + 1) / (total + 1).
double bleu_from_stats(const BleuStats& stats, int max_order, bool smooth);

/// Sentence-level BLEU; add-one smoothing on orders >= 2 by default.
double bleu(const TokenSeq& candidate, std::span<const TokenSeq> refs, int max_order = 4,
            bool smooth = true);

/// Corpus-level BLEU: clipped counts and lengths are summed before the mean.
double corpus_bleu(std::span<const TokenSeq> candidates,
                   std::span<const std::vector<TokenSeq>> refs, int max_order = 4,
                   bool smooth = false);

// ------------------------------------------------------------- ROUGE-L

inline constexpr double kRougeBeta = 1.2;

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

/// LCS F-measure, maximized over references.
double rouge_l(const TokenSeq& candidate, std::span<const TokenSeq> refs,
               double beta = kRougeBeta);

// ------------------------------------------------------------- CIDEr-D

inline constexpr double kCiderSigma = 6.0;

class CiderD {
 public:
  struct TfIdf {
    std::array<std::vector<std::pair<NGramKey, double>>, kMaxOrder> vec;
    std::array<double, kMaxOrder> norm{};
    double length = 0.0;
  };
  using Prepared = std::vector<TfIdf>;

  /// Throws InvalidState if the table is empty.
  explicit CiderD(std::shared_ptr<const DocFreqTable> df, double sigma = kCiderSigma);

  TfIdf vectorize(const TokenSeq& seq) const;
  Prepared prepare(std::span<const TokenSeq> refs) const;

  double score(const TokenSeq& candidate, const Prepared& refs) const;
  double score(const TokenSeq& candidate, std::span<const TokenSeq> refs) const;

  const DocFreqTable& doc_freq() const { return *df_; }

 private:
  std::shared_ptr<const DocFreqTable> df_;
  double sigma_;
  double log_corpus_;
};

/// Convenience form; the table is copied into a temporary scorer.
double cider_d(const TokenSeq& candidate, std::span<const TokenSeq> refs, const DocFreqTable& df);

// -------------------------------------------------------- selection

enum class Metric { Bleu4, RougeL, CiderD };

std::string_view metric_name(Metric m);
/// Accepts "bleu4", "rouge-l", "cider-d".
Metric parse_metric(std::string_view name);

/// Sentence scorer for one metric. CIDEr-D requires a doc-frequency table.
class Scorer {
 public:
  Scorer(Metric metric, std::shared_ptr<const DocFreqTable> df = nullptr);

  Metric metric() const { return metric_; }
  double operator()(const TokenSeq& candidate, std::span<const TokenSeq> refs) const;
  /// Fast path for CIDEr-D with pre-vectorized references.
  double operator()(const TokenSeq& candidate, std::span<const TokenSeq> refs,
                    const CiderD::Prepared* prepared) const;
  const CiderD* cider() const { return cider_ ? &*cider_ : nullptr; }

 private:
  Metric metric_;
  std::optional<CiderD> cider_;
};

/// Per-sentence and corpus-level scores.
struct MetricReport {
  struct Sentence {
    std::string id;
    std::vector<std::pair<std::string, double>> scores;
  };
  std::vector<Sentence> sentences;
  std::map<std::string, double> corpus;

  std::string to_json() const;
};

/// Scores every candidate against its references. Corpus values are the
/// aggregate BLEU and the mean ROUGE-L / CIDEr-D when `corpus_level` is set.
MetricReport score_corpus(std::span<const std::string> ids, std::span<const TokenSeq> candidates,
                          std::span<const std::vector<TokenSeq>> refs,
                          std::span<const Metric> metrics, const DocFreqTable* df,
                          bool corpus_level);

}  // namespace acseq::metrics
