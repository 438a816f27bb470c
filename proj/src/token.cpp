#include "acseq/token.hpp"

#include <algorithm>

#include "acseq/errors.hpp"

namespace acseq {

TokenSeq TokenSeq::from_ids(std::vector<TokenId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kPad || ids[i] == kBos) throw InvalidArgument("TokenSeq may not contain PAD or BOS");
    if (ids[i] == kEos && i + 1 != ids.size()) {
      throw InvalidArgument("EOS may only appear as the final element of a TokenSeq");
    }
  }
  TokenSeq seq;
  seq.terminated = !ids.empty() && ids.back() == kEos;
  seq.ids = std::move(ids);
  return seq;
}

TokenSeq TokenSeq::from_raw(std::span<const TokenId> raw) {
  TokenSeq seq;
  for (TokenId t : raw) {
    if (t == kEos) {
      seq.ids.push_back(kEos);
      seq.terminated = true;
      break;
    }
    if (t == kPad || t == kBos) continue;
    seq.ids.push_back(t);
  }
  return seq;
}

}  // namespace acseq
