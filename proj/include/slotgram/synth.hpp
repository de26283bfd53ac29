#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slotgram/corpus.hpp"
#include "slotgram/rng.hpp"
#include "slotgram/tags.hpp"

namespace slotgram {

struct DriftRule {
  std::string old_word;
  std::string new_word;
  std::size_t switch_index = 0;  // first order_index at which new_word is used
};

// A command pattern is a space-separated atom string:
//   O:name   filler word drawn from filler_lexicon[name], tagged O
//   FS       realize slot FS with a uniformly drawn value
//   FV=13    realize slot FV with a pinned value
//   TF*      attach the full TF domain to the frame (ambiguous reference);
//            the marker word comes from slot_lexicons["TF=*"] and is tagged O
//   DC       dealcard phrase from slot_lexicons["DC"], every token tagged I_DC
struct WeightedTemplate {
  std::string pattern;
  double weight = 0.0;
};

struct SynthConfig {
  std::size_t size = 0;
  std::uint64_t seed = 0;
  double dealcard_rate = 0.0;
  bool overspecify = false;
  std::map<std::string, std::vector<std::string>> filler_lexicon;
  std::map<std::string, std::vector<std::string>> slot_lexicons;
  std::vector<WeightedTemplate> templates;
  std::vector<DriftRule> drift_rules;
};

inline constexpr const char* kSynthConfigFormat = "slotgram-synth-config";
inline constexpr int kSynthConfigVersion = 1;

inline void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.dealcard_rate < 0.0 || cfg.dealcard_rate > 1.0)
    throw SchemaError("dealcard_rate must lie in [0, 1]");
  if (cfg.templates.empty()) throw SchemaError("no command templates configured");
  double total = 0.0;
  for (const auto& t : cfg.templates) {
    if (t.weight < 0.0) throw SchemaError("negative template weight");
    total += t.weight;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw SchemaError("template weights must sum to 1 (got " +
                      std::to_string(total) + ")");
}

namespace detail {

struct Atom {
  enum class Kind { Filler, Deal, Slot, SlotPinned, SlotAmbiguous };
  Kind kind;
  std::string slot;     // Slot/SlotPinned/SlotAmbiguous
  std::string value;    // SlotPinned
  std::string lexicon;  // Filler
};

inline std::vector<Atom> parse_pattern(const FrameSchema& schema,
                                       const std::string& pattern) {
  std::vector<Atom> atoms;
  std::istringstream ss(pattern);
  std::string tok;
  while (ss >> tok) {
    Atom a{};
    if (tok.rfind("O:", 0) == 0) {
      a.kind = Atom::Kind::Filler;
      a.lexicon = tok.substr(2);
    } else if (tok == "DC") {
      a.kind = Atom::Kind::Deal;
    } else if (tok.back() == '*') {
      a.kind = Atom::Kind::SlotAmbiguous;
      a.slot = tok.substr(0, tok.size() - 1);
    } else if (const auto eq = tok.find('='); eq != std::string::npos) {
      a.kind = Atom::Kind::SlotPinned;
      a.slot = tok.substr(0, eq);
      a.value = tok.substr(eq + 1);
    } else {
      a.kind = Atom::Kind::Slot;
      a.slot = tok;
    }
    if (a.kind == Atom::Kind::Slot || a.kind == Atom::Kind::SlotPinned ||
        a.kind == Atom::Kind::SlotAmbiguous) {
      if (!is_movecard_slot(a.slot))
        throw SchemaError("template atom names unknown slot: " + tok);
      if (a.kind == Atom::Kind::SlotPinned &&
          !schema.value_in_domain(a.slot, a.value))
        throw SchemaError("template atom pins out-of-domain value: " + tok);
    }
    atoms.push_back(std::move(a));
  }
  if (atoms.empty()) throw SchemaError("empty command template");
  return atoms;
}

inline const std::vector<std::string>& lexicon_words(
    const std::map<std::string, std::vector<std::string>>& lex,
    const std::string& primary, const std::string& fallback) {
  if (auto it = lex.find(primary); it != lex.end() && !it->second.empty())
    return it->second;
  if (auto it = lex.find(fallback); it != lex.end() && !it->second.empty())
    return it->second;
  throw DataError("empty slot_lexicon for reachable key " + primary);
}

inline std::vector<std::string> split_words(const std::string& phrase) {
  std::vector<std::string> words;
  std::istringstream ss(phrase);
  std::string w;
  while (ss >> w) words.push_back(w);
  return words;
}

}  // namespace detail

// Deterministic: the corpus is a pure function of the config.
inline Corpus generate_synthetic(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  const FrameSchema& schema = FrameSchema::patience();

  struct Parsed {
    std::vector<detail::Atom> atoms;
    double weight;
    bool deal;
  };
  std::vector<Parsed> deal_templates, move_templates;
  for (const auto& t : cfg.templates) {
    Parsed p{detail::parse_pattern(schema, t.pattern), t.weight, false};
    for (const auto& a : p.atoms)
      if (a.kind == detail::Atom::Kind::Deal) p.deal = true;
    (p.deal ? deal_templates : move_templates).push_back(std::move(p));
  }
  if (cfg.dealcard_rate > 0.0 && deal_templates.empty())
    throw SchemaError("dealcard_rate > 0 but no dealcard template present");
  if (cfg.dealcard_rate < 1.0 && move_templates.empty())
    throw SchemaError("dealcard_rate < 1 but no movecard template present");

  auto branch_weights = [](const std::vector<Parsed>& ts) {
    std::vector<double> w;
    for (const auto& t : ts) w.push_back(t.weight);
    return w;
  };
  const std::vector<double> deal_w = branch_weights(deal_templates);
  const std::vector<double> move_w = branch_weights(move_templates);

  Corpus corpus;
  Rng rng(cfg.seed);
  for (std::size_t i = 0; i < cfg.size; ++i) {
    const bool deal = rng.uniform() < cfg.dealcard_rate;
    const auto& branch = deal ? deal_templates : move_templates;
    const auto& tmpl = branch[rng.weighted_index(deal ? deal_w : move_w)];

    Utterance u;
    u.id = "u" + std::to_string(i);
    u.order_index = static_cast<std::int64_t>(i);
    u.frame.type = deal ? "dealcard" : "movecard";
    std::vector<ConceptTag> tags;

    for (const auto& atom : tmpl.atoms) {
      switch (atom.kind) {
        case detail::Atom::Kind::Filler: {
          auto it = cfg.filler_lexicon.find(atom.lexicon);
          if (it == cfg.filler_lexicon.end() || it->second.empty())
            throw DataError("empty filler lexicon " + atom.lexicon);
          u.words.push_back(rng.pick(it->second));
          tags.push_back(ConceptTag::outside());
          break;
        }
        case detail::Atom::Kind::Deal: {
          const auto& phrases = detail::lexicon_words(cfg.slot_lexicons, "DC", "DC");
          for (auto& w : detail::split_words(rng.pick(phrases))) {
            u.words.push_back(std::move(w));
            tags.push_back(ConceptTag::dealcard());
          }
          break;
        }
        case detail::Atom::Kind::Slot:
        case detail::Atom::Kind::SlotPinned: {
          const std::string value =
              atom.kind == detail::Atom::Kind::SlotPinned
                  ? atom.value
                  : schema.domain(atom.slot)[rng.index(schema.domain(atom.slot).size())];
          const auto& words = detail::lexicon_words(
              cfg.slot_lexicons, atom.slot + "=" + value,
              family_of_slot(atom.slot) + "=" + value);
          u.words.push_back(rng.pick(words));
          tags.push_back(ConceptTag::of(TagPos::Inside, atom.slot, value));
          u.frame.slots[atom.slot].insert(value);
          break;
        }
        case detail::Atom::Kind::SlotAmbiguous: {
          const auto& words = detail::lexicon_words(
              cfg.slot_lexicons, atom.slot + "=*",
              family_of_slot(atom.slot) + "=*");
          u.words.push_back(rng.pick(words));
          tags.push_back(ConceptTag::outside());
          const auto& dom = schema.domain(atom.slot);
          u.frame.slots[atom.slot].insert(dom.begin(), dom.end());
          break;
        }
      }
    }

    if (!deal && cfg.overspecify) {
      for (const std::string slot : {"FC", "TC"}) {
        if (!u.frame.slots.count(slot)) {
          const auto& dom = schema.domain(slot);
          u.frame.slots[slot].insert(dom[rng.index(dom.size())]);
        }
      }
    }

    for (auto& w : u.words) {
      for (const auto& rule : cfg.drift_rules) {
        if (i < rule.switch_index) {
          if (w == rule.new_word) w = rule.old_word;
        } else {
          if (w == rule.old_word) w = rule.new_word;
        }
      }
    }

    u.gold_tags = std::move(tags);
    corpus.utterances.push_back(std::move(u));
  }
  validate_corpus(corpus);
  return corpus;
}

// A small Patience command language. Tokens are Dutch-flavoured but only
// token identity matters downstream.
inline SynthConfig default_synth_config(std::size_t size = 1000,
                                        std::uint64_t seed = 0) {
  SynthConfig cfg;
  cfg.size = size;
  cfg.seed = seed;
  cfg.dealcard_rate = 0.25;
  cfg.overspecify = true;
  cfg.filler_lexicon = {
      {"verb", {"leg", "zet", "plaats"}},
      {"det", {"de"}},
      {"prep", {"op", "naar"}},
      {"tail", {"graag", "zo"}},
      {"colw", {"kolom"}},
      {"from", {"uit"}},
      {"dcpre", {"nu", "dan"}},
  };
  cfg.slot_lexicons = {
      {"S=h", {"harten"}},
      {"S=d", {"ruiten"}},
      {"S=c", {"klaveren"}},
      {"S=s", {"schoppen"}},
      {"V=1", {"aas"}},
      {"V=2", {"twee"}},
      {"V=3", {"drie"}},
      {"V=4", {"vier"}},
      {"V=5", {"vijf"}},
      {"V=6", {"zes"}},
      {"V=7", {"zeven"}},
      {"V=8", {"acht"}},
      {"V=9", {"negen"}},
      {"V=10", {"tien"}},
      {"V=11", {"boer"}},
      {"V=12", {"dame"}},
      {"V=13", {"koning"}},
      {"C=1", {"eerste"}},
      {"C=2", {"tweede"}},
      {"C=3", {"derde"}},
      {"C=4", {"vierde"}},
      {"C=5", {"vijfde"}},
      {"C=6", {"zesde"}},
      {"C=7", {"zevende"}},
      {"H=hand", {"hand"}},
      {"TF=*", {"opzij"}},
      {"DC", {"kaarten omdraaien", "omdraaien", "nieuwe kaarten omdraaien"}},
  };
  cfg.templates = {
      {"O:verb O:det FS FV O:prep O:det TS TV", 0.445},
      {"O:det FS FV O:prep O:det TS TV", 0.135},
      {"O:verb O:det FS FV O:prep O:det TS TV O:tail", 0.09},
      {"O:verb O:det FS FV O:prep O:det TC O:colw", 0.063},
      {"O:verb O:det FS FV O:from O:det FH O:prep O:det TS TV", 0.045},
      {"O:verb O:det FS FV TF*", 0.072},
      {"DC", 0.05},
      {"O:dcpre DC", 0.10},
  };
  return cfg;
}

// Same language plus a lexicon shift: the king value is verbalized "koning"
// before utterance 200 and "heer" from there on, and king moves are frequent
// enough for the shift to be visible in evaluation scores.
inline SynthConfig drift_synth_config(std::size_t size = 1142,
                                      std::uint64_t seed = 0) {
  SynthConfig cfg = default_synth_config(size, seed);
  cfg.templates = {
      {"O:verb O:det FS FV O:prep O:det TS TV", 0.285},
      {"O:det FS FV O:prep O:det TS TV", 0.135},
      {"O:verb O:det FS FV O:prep O:det TS TV O:tail", 0.09},
      {"O:verb O:det FS FV O:prep O:det TC O:colw", 0.063},
      {"O:verb O:det FS FV O:from O:det FH O:prep O:det TS TV", 0.045},
      {"O:verb O:det FS FV TF*", 0.072},
      {"O:verb O:det FS FV=13 O:prep O:det TS TV", 0.08},
      {"O:verb O:det FS FV O:prep O:det TS TV=13", 0.08},
      {"DC", 0.05},
      {"O:dcpre DC", 0.10},
  };
  cfg.drift_rules = {{"koning", "heer", 200}};
  return cfg;
}

inline void save_synth_config(const SynthConfig& cfg, const std::string& path) {
  nlohmann::json j = {
      {"format", kSynthConfigFormat},
      {"version", kSynthConfigVersion},
      {"size", cfg.size},
      {"seed", cfg.seed},
      {"dealcard_rate", cfg.dealcard_rate},
      {"overspecify", cfg.overspecify},
      {"filler_lexicon", cfg.filler_lexicon},
      {"slot_lexicons", cfg.slot_lexicons},
  };
  j["templates"] = nlohmann::json::array();
  for (const auto& t : cfg.templates)
    j["templates"].push_back({{"pattern", t.pattern}, {"weight", t.weight}});
  j["drift_rules"] = nlohmann::json::array();
  for (const auto& r : cfg.drift_rules)
    j["drift_rules"].push_back({{"old_word", r.old_word},
                                {"new_word", r.new_word},
                                {"switch_index", r.switch_index}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j,
                                          const std::string& what) {
  try {
    SynthConfig cfg;
    cfg.size = j.at("size").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.dealcard_rate = j.at("dealcard_rate").get<double>();
    cfg.overspecify = j.at("overspecify").get<bool>();
    cfg.filler_lexicon = j.at("filler_lexicon")
                             .get<std::map<std::string, std::vector<std::string>>>();
    cfg.slot_lexicons = j.at("slot_lexicons")
                            .get<std::map<std::string, std::vector<std::string>>>();
    for (const auto& t : j.at("templates"))
      cfg.templates.push_back({t.at("pattern").get<std::string>(),
                               t.at("weight").get<double>()});
    for (const auto& r : j.value("drift_rules", nlohmann::json::array()))
      cfg.drift_rules.push_back({r.at("old_word").get<std::string>(),
                                 r.at("new_word").get<std::string>(),
                                 r.at("switch_index").get<std::size_t>()});
    validate_synth_config(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

inline SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    if (j.at("format") != kSynthConfigFormat)
      throw ParseError(path + ": not a synth config file");
    if (j.at("version").get<int>() != kSynthConfigVersion)
      throw ParseError(path + ": unsupported config version");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return synth_config_from_json(j, path);
}

}  // namespace slotgram
