#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace acseq {

using TokenId = std::uint32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kFirstWordId = 4;

/// An action sequence a_1..a_T. When `terminated`, the final id is EOS.
struct TokenSeq {
  std::vector<TokenId> ids;
  bool terminated = false;

  /// Validates: no PAD/BOS, EOS only as the final element.
  static TokenSeq from_ids(std::vector<TokenId> ids);

  /// Lenient form for scoring: truncates at the first EOS and drops PAD/BOS.
  static TokenSeq from_raw(std::span<const TokenId> raw);

  /// Ids without the trailing EOS.
  std::span<const TokenId> body() const {
    return terminated ? std::span<const TokenId>(ids).first(ids.size() - 1)
                      : std::span<const TokenId>(ids);
  }

  bool operator==(const TokenSeq&) const = default;
};

}  // namespace acseq
