// Copyright (c) 2026, The tridx Authors
// SPDX-License-Identifier: Apache-2.0

#include "tridx/tokenizer.hpp"

#include <cstdio>

#include "tridx/error.hpp"

namespace tridx {

namespace {

struct Tag {
  int id;
  std::string_view text;
};

constexpr std::array<Tag, 7> kTags{{
    {tok::kEcg, "<ecg>"},
    {tok::kCxr, "<cxr>"},
    {tok::kLab, "<lab>"},
    {tok::kThinkOpen, "<think>"},
    {tok::kThinkClose, "</think>"},
    {tok::kAnswerOpen, "<answer>"},
    {tok::kAnswerClose, "</answer>"},
}};

}  // namespace

std::string_view Tokenizer::special_text(int id) {
  for (const auto& t : kTags)
    if (t.id == id) return t.text;
  return {};
}

std::vector<int> Tokenizer::encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '<') {
      bool matched = false;
      for (const auto& t : kTags) {
        if (text.substr(i, t.text.size()) == t.text) {
          ids.push_back(t.id);
          i += t.text.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '\n') {
      ids.push_back(tok::kNewline);
    } else if (c >= 32 && c <= 126) {
      ids.push_back(c);
    } else {
      char buf[8];
      std::snprintf(buf, sizeof buf, "0x%02x", c);
      throw EncodingError("character " + std::string(buf) + " at offset " + std::to_string(i) +
                          " is outside the tokenizer alphabet");
    }
    ++i;
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == tok::kPad || id == tok::kBos || id == tok::kEos) continue;
    if (auto s = special_text(id); !s.empty()) {
      out += s;
    } else if (id == tok::kNewline) {
      out += '\n';
    } else if (id >= 32 && id <= 126) {
      out += static_cast<char>(id);
    } else {
      out += '?';
    }
  }
  return out;
}

}  // namespace tridx
