#pragma once

// Synthetic captioning corpora: each record pairs a concept-score context
// vector (multi-hot over attributes plus noise) with template captions that
// mention every active attribute.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "acseq/token.hpp"

namespace acseq::data {

struct CaptionRecord {
  std::string id;
  std::vector<double> context;
  std::vector<std::vector<std::string>> refs;

  bool operator==(const CaptionRecord&) const = default;
};

enum class CorpusMode { Deterministic, Varied };

struct TaskSpec {
  std::size_t attributes = 20;      // k
  std::size_t per_example = 3;      // d
  std::size_t refs = 5;             // m
  int grammar = 0;
  std::size_t synonyms = 3;
  double noise = 0.1;
  CorpusMode mode = CorpusMode::Varied;
  std::uint64_t seed = 0;
};

CorpusMode parse_mode(std::string_view s);
std::string_view mode_name(CorpusMode m);

/// Surface word of attribute `j`.
std::string attribute_word(std::size_t j);

/// Generates `n` records. In deterministic mode the m references are one
/// fixed realization (ascending attribute order, first synonyms).
std::vector<CaptionRecord> generate_corpus(const TaskSpec& spec, std::size_t n);

/// Attributes active in a context, recovered by thresholding at 0.5.
std::vector<std::size_t> active_attributes(const std::vector<double>& context);

class Vocabulary {
 public:
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kBosToken = "<bos>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kUnkToken = "<unk>";

  /// Reserved ids only.
  Vocabulary();
  /// From an id-ordered token list whose first four entries are reserved.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line, id order.
  std::string serialize() const;
  static Vocabulary parse(const std::string& text);
  /// Git-style hash of `serialize()`.
  std::string hash() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Tokens ordered by descending frequency then ascending byte order; tokens
/// seen fewer than `min_count` times are left out (they encode to UNK).
Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, std::size_t min_count = 1,
                       std::size_t max_size = 65535);

/// Encodes a caption, appending EOS once. Unknown tokens become UNK.
TokenSeq encode(const std::vector<std::string>& caption, const Vocabulary& vocab);
std::vector<TokenSeq> encode_refs(const CaptionRecord& record, const Vocabulary& vocab);
/// Body tokens; EOS, PAD and BOS are dropped.
std::vector<std::string> decode(const TokenSeq& seq, const Vocabulary& vocab);

// Line-delimited JSON with fields `id`, `context`, `refs`.
std::string record_to_json_line(const CaptionRecord& r);
CaptionRecord record_from_json_line(const std::string& line);
std::string corpus_to_jsonl(const std::vector<CaptionRecord>& corpus);
void write_corpus(const std::filesystem::path& path, const std::vector<CaptionRecord>& corpus);
std::vector<CaptionRecord> read_corpus(const std::filesystem::path& path);

}  // namespace acseq::data
