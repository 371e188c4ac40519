// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0
//
// Character tokenizer over printable ASCII plus newline, with reserved ids for
// the control and tag tokens. Tag strings in text always map to their special
// id, so decode(encode(s)) == s for every string over the alphabet.

#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tridx {

namespace tok {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kEcg = 3;
inline constexpr int kCxr = 4;
inline constexpr int kLab = 5;
inline constexpr int kThinkOpen = 6;
inline constexpr int kThinkClose = 7;
inline constexpr int kAnswerOpen = 8;
inline constexpr int kAnswerClose = 9;
inline constexpr int kNewline = 10;
inline constexpr int kVocab = 256;
}  // namespace tok

class Tokenizer {
 public:
  /// Throws EncodingError naming the first character outside the alphabet.
  static std::vector<int> encode(std::string_view text);
  /// PAD, BOS and EOS decode to nothing; unassigned ids decode to '?'.
  static std::string decode(std::span<const int> ids);
  static bool is_placeholder(int id) { return id >= tok::kEcg && id <= tok::kLab; }
  /// Text form of a special id, empty for ordinary characters.
  static std::string_view special_text(int id);
};

}  // namespace tridx
