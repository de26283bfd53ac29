#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotgram/errors.hpp"
#include "slotgram/tags.hpp"

namespace slotgram {

// The Patience frame schema: two frame types, movecard with nine slots over
// finite value domains and dealcard with none.
struct FrameSchema {
  std::vector<std::string> frame_types;
  std::map<std::string, std::vector<std::string>> slots_per_type;
  std::map<std::string, std::vector<std::string>> values_per_slot;

  static const FrameSchema& patience() {
    static const FrameSchema schema = [] {
      FrameSchema s;
      s.frame_types = {"movecard", "dealcard"};
      s.slots_per_type["movecard"] = movecard_slots();
      s.slots_per_type["dealcard"] = {};
      const std::vector<std::string> suits = {"h", "d", "c", "s"};
      auto numbers = [](int n) {
        std::vector<std::string> v;
        for (int i = 1; i <= n; ++i) v.push_back(std::to_string(i));
        return v;
      };
      s.values_per_slot["FS"] = suits;
      s.values_per_slot["TS"] = suits;
      s.values_per_slot["FV"] = numbers(13);
      s.values_per_slot["TV"] = numbers(13);
      s.values_per_slot["FC"] = numbers(7);
      s.values_per_slot["TC"] = numbers(7);
      s.values_per_slot["FF"] = numbers(4);
      s.values_per_slot["TF"] = numbers(4);
      s.values_per_slot["FH"] = {"hand"};
      return s;
    }();
    return schema;
  }

  bool has_type(const std::string& t) const {
    return slots_per_type.count(t) != 0;
  }

  const std::vector<std::string>& slots_of(const std::string& type) const {
    auto it = slots_per_type.find(type);
    if (it == slots_per_type.end()) throw SchemaError("unknown frame type: " + type);
    return it->second;
  }

  const std::vector<std::string>& domain(const std::string& slot) const {
    auto it = values_per_slot.find(slot);
    if (it == values_per_slot.end()) throw SchemaError("unknown slot: " + slot);
    return it->second;
  }

  bool value_in_domain(const std::string& slot, const std::string& value) const {
    const auto& d = domain(slot);
    return std::find(d.begin(), d.end(), value) != d.end();
  }
};

// A frame type plus slot -> value-set mapping. Reference frames may carry
// multi-value sets (ambiguity); predicted frames carry singletons.
struct SemanticFrame {
  std::string type = "movecard";
  std::map<std::string, std::set<std::string>> slots;

  bool operator==(const SemanticFrame&) const = default;

  static SemanticFrame movecard() { return {"movecard", {}}; }
  static SemanticFrame dealcard() { return {"dealcard", {}}; }
};

inline void validate_frame(const FrameSchema& schema, const SemanticFrame& f) {
  if (!schema.has_type(f.type)) throw SchemaError("unknown frame type: " + f.type);
  const auto& allowed = schema.slots_of(f.type);
  for (const auto& [slot, values] : f.slots) {
    if (std::find(allowed.begin(), allowed.end(), slot) == allowed.end())
      throw SchemaError("slot " + slot + " not valid for frame type " + f.type);
    if (values.empty()) throw SchemaError("slot " + slot + " has empty value set");
    for (const auto& v : values) {
      if (!schema.value_in_domain(slot, v))
        throw SchemaError("value " + v + " not in domain of slot " + slot);
    }
  }
}

struct Utterance {
  std::string id;
  std::int64_t order_index = 0;
  std::vector<std::string> words;
  SemanticFrame frame;
  std::optional<std::vector<ConceptTag>> gold_tags;

  bool operator==(const Utterance&) const = default;
};

inline void validate_utterance(const FrameSchema& schema, const Utterance& u) {
  if (u.words.empty()) throw SchemaError("utterance " + u.id + " has no words");
  validate_frame(schema, u.frame);
  if (u.gold_tags && u.gold_tags->size() != u.words.size())
    throw SchemaError("utterance " + u.id + ": gold_tags/word count mismatch");
}

struct Corpus {
  FrameSchema schema = FrameSchema::patience();
  std::vector<Utterance> utterances;

  bool operator==(const Corpus& other) const {
    return utterances == other.utterances;
  }

  std::size_t size() const { return utterances.size(); }
};

inline void validate_corpus(const Corpus& c) {
  std::int64_t prev = 0;
  bool first = true;
  for (const auto& u : c.utterances) {
    validate_utterance(c.schema, u);
    if (!first && u.order_index <= prev)
      throw SchemaError("order_index values must be strictly increasing (got " +
                        std::to_string(u.order_index) + " after " +
                        std::to_string(prev) + ")");
    prev = u.order_index;
    first = false;
  }
}

namespace detail {

inline nlohmann::json frame_to_json(const SemanticFrame& f) {
  nlohmann::json slots = nlohmann::json::object();
  for (const auto& [slot, values] : f.slots)
    slots[slot] = std::vector<std::string>(values.begin(), values.end());
  return {{"type", f.type}, {"slots", slots}};
}

inline SemanticFrame frame_from_json(const nlohmann::json& j) {
  SemanticFrame f;
  f.type = j.at("type").get<std::string>();
  for (const auto& [slot, values] : j.at("slots").items()) {
    std::set<std::string> vs;
    for (const auto& v : values) vs.insert(v.get<std::string>());
    f.slots[slot] = std::move(vs);
  }
  return f;
}

inline nlohmann::json utterance_to_json(const Utterance& u) {
  nlohmann::json j = {{"id", u.id},
                      {"order_index", u.order_index},
                      {"words", u.words},
                      {"frame", frame_to_json(u.frame)}};
  if (u.gold_tags) {
    std::vector<std::string> tags;
    for (const auto& t : *u.gold_tags) tags.push_back(t.str());
    j["gold_tags"] = tags;
  }
  return j;
}

inline Utterance utterance_from_json(const nlohmann::json& j) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.order_index = j.at("order_index").get<std::int64_t>();
  u.words = j.at("words").get<std::vector<std::string>>();
  u.frame = frame_from_json(j.at("frame"));
  if (j.contains("gold_tags")) {
    std::vector<ConceptTag> tags;
    for (const auto& t : j.at("gold_tags"))
      tags.push_back(ConceptTag::parse(t.get<std::string>()));
    u.gold_tags = std::move(tags);
  }
  return u;
}

}  // namespace detail

inline constexpr const char* kCorpusFormat = "slotgram-corpus";
inline constexpr int kCorpusVersion = 1;

// One header record, then one record per utterance; UTF-8, line oriented.
inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << nlohmann::json{{"format", kCorpusFormat}, {"version", kCorpusVersion}}
      << '\n';
  for (const auto& u : corpus.utterances)
    out << detail::utterance_to_json(u) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!saw_header) {
      if (!j.contains("format") || j["format"] != kCorpusFormat)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": missing corpus header record");
      if (j.at("version").get<int>() != kCorpusVersion)
        throw ParseError(path + ":" + std::to_string(lineno) +
                         ": unsupported corpus version");
      saw_header = true;
      continue;
    }
    try {
      corpus.utterances.push_back(detail::utterance_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    validate_corpus(corpus);
  } catch (const DataError& e) {
    throw SchemaError(path + ": " + e.what());
  }
  return corpus;
}

// First n utterances, in recording order.
inline Corpus prefix(const Corpus& corpus, std::size_t n) {
  Corpus out;
  out.schema = corpus.schema;
  out.utterances.assign(corpus.utterances.begin(),
                        corpus.utterances.begin() +
                            static_cast<std::ptrdiff_t>(
                                std::min(n, corpus.utterances.size())));
  return out;
}

struct Partition {
  std::vector<std::size_t> train_sizes;  // ascending
  Corpus pool;                           // training prefix, recording order
  Corpus eval;                           // trailing fraction, recording order
};

// The last ceil(N * num/den) utterances become the evaluation set; the
// remaining prefix is the training pool, cut into chunk-sized sizes with the
// full pool appended when it is not a multiple of the chunk.
inline Partition partition_learning_curve(const Corpus& corpus,
                                          std::size_t chunk = 50,
                                          std::int64_t eval_num = 1,
                                          std::int64_t eval_den = 3) {
  const std::size_t n = corpus.size();
  if (n < 2) throw DataError("corpus too small to partition (need >= 2 utterances)");
  if (chunk < 1) throw DataError("chunk must be >= 1");
  if (eval_num < 0 || eval_den <= 0 || eval_num > eval_den)
    throw DataError("eval fraction must lie in [0, 1]");
  const std::size_t eval_n = static_cast<std::size_t>(
      (static_cast<std::int64_t>(n) * eval_num + eval_den - 1) / eval_den);
  const std::size_t pool_n = n - eval_n;
  if (pool_n == 0) throw DataError("eval fraction leaves no training pool");

  Partition p;
  p.pool.schema = corpus.schema;
  p.eval.schema = corpus.schema;
  p.pool.utterances.assign(corpus.utterances.begin(),
                           corpus.utterances.begin() + static_cast<std::ptrdiff_t>(pool_n));
  p.eval.utterances.assign(corpus.utterances.begin() + static_cast<std::ptrdiff_t>(pool_n),
                           corpus.utterances.end());
  for (std::size_t s = chunk; s <= pool_n; s += chunk) p.train_sizes.push_back(s);
  if (p.train_sizes.empty() || p.train_sizes.back() != pool_n)
    p.train_sizes.push_back(pool_n);
  return p;
}

// Adapter for externally maintained data: tab-separated lines
//   id <TAB> space-separated words <TAB> frame type <TAB> slot=value;slot=value
// Ambiguous reference values use slot=v1|v2. The fourth column is empty for
// dealcard. Converts to the native corpus form; order_index is the line rank.
inline Corpus import_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos
                                            ? std::string::npos
                                            : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 3)
      throw ParseError(path + ":" + std::to_string(lineno) +
                       ": expected id, words, frame type");
    Utterance u;
    u.id = cols[0];
    u.order_index = static_cast<std::int64_t>(corpus.utterances.size());
    std::istringstream ws(cols[1]);
    std::string w;
    while (ws >> w) u.words.push_back(w);
    u.frame.type = cols[2];
    if (cols.size() > 3 && !cols[3].empty()) {
      std::istringstream ss(cols[3]);
      std::string pair;
      while (std::getline(ss, pair, ';')) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos)
          throw ParseError(path + ":" + std::to_string(lineno) +
                           ": bad slot assignment '" + pair + "'");
        std::set<std::string> values;
        std::istringstream vs(pair.substr(eq + 1));
        std::string v;
        while (std::getline(vs, v, '|')) values.insert(v);
        u.frame.slots[pair.substr(0, eq)] = std::move(values);
      }
    }
    corpus.utterances.push_back(std::move(u));
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace slotgram
