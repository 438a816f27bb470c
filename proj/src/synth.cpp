#include "acseq/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "acseq/errors.hpp"
#include "acseq/hashing.hpp"
#include "acseq/rng.hpp"

namespace acseq::data {

namespace {

using Group = std::vector<std::string>;

const Group kDet{"a", "one", "the"};
const Group kConj{"and", "with", "plus"};
const Group kPhoto{"photo", "picture", "image"};
const Group kPlace{"here", "nearby", "outside"};

enum class Form { Plain, ThereIs, PhotoOf, Placed };

std::vector<Form> grammar_forms(int grammar) {
  switch (grammar) {
    case 0: return {Form::Plain, Form::ThereIs, Form::PhotoOf, Form::Placed};
    case 1: return {Form::Plain};
    default: throw InvalidArgument("unknown grammar id " + std::to_string(grammar) + " (0|1)");
  }
}

struct Realizer {
  std::size_t synonyms;
  Rng* rng;  // null: always the first synonym

  const std::string& pick(const Group& g) const {
    if (!rng) return g[0];
    return g[rng->index(std::min(synonyms, g.size()))];
  }

  std::vector<std::string> caption(Form form, const std::vector<std::size_t>& attrs) const {
    std::vector<std::string> out;
    if (form == Form::ThereIs) {
      out.push_back("there");
      out.push_back("is");
    } else if (form == Form::PhotoOf) {
      out.push_back(pick(kPhoto));
      out.push_back("of");
    }
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (i > 0) out.push_back(pick(kConj));
      out.push_back(pick(kDet));
      out.push_back(attribute_word(attrs[i]));
    }
    if (form == Form::Placed) out.push_back(pick(kPlace));
    return out;
  }
};

}  // namespace

CorpusMode parse_mode(std::string_view s) {
  if (s == "deterministic") return CorpusMode::Deterministic;
  if (s == "varied") return CorpusMode::Varied;
  throw InvalidArgument("mode must be deterministic or varied");
}

std::string_view mode_name(CorpusMode m) {
  return m == CorpusMode::Deterministic ? "deterministic" : "varied";
}

std::string attribute_word(std::size_t j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "attr%02zu", j);
  return buf;
}

std::vector<CaptionRecord> generate_corpus(const TaskSpec& spec, std::size_t n) {
  if (spec.per_example > spec.attributes) {
    throw InvalidArgument("attributes per example exceeds the attribute count");
  }
  if (spec.per_example == 0 || spec.refs == 0) {
    throw InvalidArgument("attributes per example and references per example must be >= 1");
  }
  if (spec.synonyms == 0) throw InvalidArgument("synonym count must be >= 1");
  if (spec.noise < 0.0 || spec.noise >= 0.5) throw InvalidArgument("noise must be in [0, 0.5)");
  const std::vector<Form> forms = grammar_forms(spec.grammar);

  Rng rng(spec.seed);
  std::vector<CaptionRecord> corpus;
  corpus.reserve(n);
  std::vector<std::size_t> pool(spec.attributes);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t j = 0; j < spec.per_example; ++j) {
      std::swap(pool[j], pool[j + rng.index(pool.size() - j)]);
    }
    std::vector<std::size_t> attrs(pool.begin(), pool.begin() + spec.per_example);
    std::sort(attrs.begin(), attrs.end());

    CaptionRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "ex%06zu", i);
    rec.id = id;
    rec.context.assign(spec.attributes, 0.0);
    for (std::size_t a : attrs) rec.context[a] = 1.0;
    for (double& c : rec.context) {
      if (spec.noise > 0.0) c = std::clamp(c + rng.uniform(-spec.noise, spec.noise), 0.0, 1.0);
    }

    if (spec.mode == CorpusMode::Deterministic) {
      const Realizer fixed{spec.synonyms, nullptr};
      rec.refs.assign(spec.refs, fixed.caption(forms[0], attrs));
    } else {
      const Realizer varied{spec.synonyms, &rng};
      for (std::size_t m = 0; m < spec.refs; ++m) {
        std::vector<std::size_t> order = attrs;
        for (std::size_t j = 0; j + 1 < order.size(); ++j) {
          std::swap(order[j], order[j + rng.index(order.size() - j)]);
        }
        const Form form = forms[rng.index(forms.size())];
        rec.refs.push_back(varied.caption(form, order));
      }
    }
    corpus.push_back(std::move(rec));
  }
  return corpus;
}

std::vector<std::size_t> active_attributes(const std::vector<double>& context) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < context.size(); ++j) {
    if (context[j] > 0.5) out.push_back(j);
  }
  return out;
}

// ------------------------------------------------------------ vocabulary

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{std::string(kPadToken), std::string(kBosToken),
                                          std::string(kEosToken), std::string(kUnkToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kFirstWordId || tokens_[kPad] != kPadToken || tokens_[kBos] != kBosToken ||
      tokens_[kEos] != kEosToken || tokens_[kUnk] != kUnkToken) {
    throw InvalidArgument("vocabulary must start with <pad> <bos> <eos> <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\r\n") != std::string::npos) {
      throw InvalidArgument("vocabulary tokens must be non-empty and whitespace-free");
    }
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw InvalidArgument("token id out of vocabulary range");
  return tokens_[id];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::parse(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::string Vocabulary::hash() const { return git_blob_hash(serialize()); }

Vocabulary build_vocab(const std::vector<CaptionRecord>& corpus, std::size_t min_count,
                       std::size_t max_size) {
  if (corpus.empty()) throw InvalidArgument("build_vocab: empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& r : corpus) {
    for (const auto& ref : r.refs) {
      for (const auto& tok : ref) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> items;
  for (const auto& [tok, c] : freq) {
    if (c >= min_count && tok.front() != '<') items.emplace_back(tok, c);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary reserved;
  std::vector<std::string> tokens = reserved.tokens();
  for (const auto& [tok, c] : items) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

TokenSeq encode(const std::vector<std::string>& caption, const Vocabulary& vocab) {
  TokenSeq seq;
  seq.ids.reserve(caption.size() + 1);
  for (const auto& tok : caption) seq.ids.push_back(vocab.id(tok));
  seq.ids.push_back(kEos);
  seq.terminated = true;
  return seq;
}

std::vector<TokenSeq> encode_refs(const CaptionRecord& record, const Vocabulary& vocab) {
  std::vector<TokenSeq> out;
  out.reserve(record.refs.size());
  for (const auto& r : record.refs) out.push_back(encode(r, vocab));
  return out;
}

std::vector<std::string> decode(const TokenSeq& seq, const Vocabulary& vocab) {
  std::vector<std::string> out;
  const TokenSeq clean = TokenSeq::from_raw(seq.ids);
  for (TokenId t : clean.body()) out.push_back(vocab.token(t));
  return out;
}

}  // namespace acseq::data
