#pragma once

#include <compare>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slotgram/errors.hpp"

namespace slotgram {

enum class TagPos { Inside, Outside, Begin };

// The nine movecard slots, in canonical order. Suits (?S), card values (?V),
// foundations (?F), columns (?C) and the hand (FH), each split into a from
// facet (F?) and a target facet (T?).
inline const std::vector<std::string>& movecard_slots() {
  static const std::vector<std::string> slots = {
      "FS", "FV", "FF", "FC", "FH", "TS", "TV", "TF", "TC"};
  return slots;
}

inline bool is_movecard_slot(const std::string& slot) {
  for (const auto& s : movecard_slots())
    if (s == slot) return true;
  return false;
}

// 'F' or 'T'.
inline char facet_of_slot(const std::string& slot) { return slot[0]; }

// S, V, C, FOUND or H. FOUND avoids a clash with the from-facet symbol F.
inline std::string family_of_slot(const std::string& slot) {
  switch (slot[1]) {
    case 'S': return "S";
    case 'V': return "V";
    case 'C': return "C";
    case 'F': return "FOUND";
    case 'H': return "H";
  }
  throw SchemaError("unknown slot: " + slot);
}

// Inverse of the facet/family split; empty for combinations that do not name
// a real slot (there is no target-hand slot).
inline std::optional<std::string> slot_of(char facet, const std::string& family) {
  std::string slot(1, facet);
  if (family == "S") slot += 'S';
  else if (family == "V") slot += 'V';
  else if (family == "C") slot += 'C';
  else if (family == "FOUND") slot += 'F';
  else if (family == "H") slot += 'H';
  else return std::nullopt;
  if (!is_movecard_slot(slot)) return std::nullopt;
  return slot;
}

// Per-token concept tag: an IOB position plus an optional payload. Forms:
// "O", "I_DC" (dealcard chunk), "I_FS=h" (slot/value), and B_ variants.
struct ConceptTag {
  TagPos pos = TagPos::Outside;
  std::string slot;   // empty for O; "DC" for dealcard chunks
  std::string value;  // empty for O and DC

  static ConceptTag outside() { return {}; }
  static ConceptTag dealcard(TagPos p = TagPos::Inside) {
    return {p, "DC", ""};
  }
  static ConceptTag of(TagPos p, std::string s, std::string v) {
    return {p, std::move(s), std::move(v)};
  }

  bool is_outside() const { return pos == TagPos::Outside; }
  bool is_dealcard() const { return slot == "DC"; }
  bool has_slot_value() const { return !slot.empty() && slot != "DC"; }

  auto operator<=>(const ConceptTag&) const = default;

  std::string str() const {
    if (pos == TagPos::Outside) return "O";
    std::string out(pos == TagPos::Begin ? "B_" : "I_");
    out += slot;
    if (!value.empty()) {
      out += '=';
      out += value;
    }
    return out;
  }

  static ConceptTag parse(const std::string& text) {
    if (text == "O") return outside();
    TagPos pos;
    if (text.rfind("I_", 0) == 0) pos = TagPos::Inside;
    else if (text.rfind("B_", 0) == 0) pos = TagPos::Begin;
    else throw ParseError("bad concept tag: " + text);
    const std::string body = text.substr(2);
    if (body == "DC") return dealcard(pos);
    const auto eq = body.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == body.size())
      throw ParseError("bad concept tag: " + text);
    ConceptTag t{pos, body.substr(0, eq), body.substr(eq + 1)};
    if (!is_movecard_slot(t.slot))
      throw ParseError("bad concept tag slot: " + text);
    return t;
  }
};

// A token sequence with one tag per token.
struct TaggedUtterance {
  std::vector<std::string> words;
  std::vector<ConceptTag> tags;

  bool operator==(const TaggedUtterance&) const = default;
};

// Exchange format: token TAB tag per line, blank line between utterances.
inline std::string format_tagged(const std::vector<TaggedUtterance>& seqs) {
  std::string out;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (i) out += '\n';
    const auto& s = seqs[i];
    for (std::size_t t = 0; t < s.words.size(); ++t) {
      out += s.words[t];
      out += '\t';
      out += s.tags[t].str();
      out += '\n';
    }
  }
  return out;
}

inline std::vector<TaggedUtterance> parse_tagged(std::istream& in) {
  std::vector<TaggedUtterance> seqs;
  TaggedUtterance cur;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      if (!cur.words.empty()) seqs.push_back(std::move(cur));
      cur = {};
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("tagged input line " + std::to_string(lineno) +
                       ": expected token TAB tag");
    cur.words.push_back(line.substr(0, tab));
    cur.tags.push_back(ConceptTag::parse(line.substr(tab + 1)));
  }
  if (!cur.words.empty()) seqs.push_back(std::move(cur));
  return seqs;
}

inline void write_tagged_file(const std::vector<TaggedUtterance>& seqs,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << format_tagged(seqs);
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<TaggedUtterance> read_tagged_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  return parse_tagged(in);
}

}  // namespace slotgram
