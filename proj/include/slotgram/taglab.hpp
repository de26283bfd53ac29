#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slotgram/errors.hpp"
#include "slotgram/rng.hpp"
#include "slotgram/tags.hpp"
#include "slotgram/textfmt.hpp"

namespace slotgram {

// Splits a tag into a part that generalizes over from/target (I_FS=h becomes
// I_S=h) and the facet remainder (F or T; O when there is no facet).
inline std::pair<std::string, std::string> decompose_tag(const ConceptTag& tag) {
  if (tag.is_outside()) return {"O", "O"};
  const std::string prefix = tag.pos == TagPos::Begin ? "B_" : "I_";
  if (tag.is_dealcard()) return {prefix + "DC", "O"};
  return {prefix + family_of_slot(tag.slot) + "=" + tag.value,
          std::string(1, facet_of_slot(tag.slot))};
}

// Inverse of decompose_tag on compatible pairs; incompatible pairs yield O.
inline ConceptTag compose_tags(const std::string& generalized,
                               const std::string& remainder) {
  if (generalized == "O") return ConceptTag::outside();
  TagPos pos;
  if (generalized.rfind("I_", 0) == 0) pos = TagPos::Inside;
  else if (generalized.rfind("B_", 0) == 0) pos = TagPos::Begin;
  else return ConceptTag::outside();
  const std::string body = generalized.substr(2);
  if (body == "DC")
    return remainder == "O" ? ConceptTag::dealcard(pos) : ConceptTag::outside();
  const auto eq = body.find('=');
  if (eq == std::string::npos) return ConceptTag::outside();
  if (remainder.size() != 1 || (remainder[0] != 'F' && remainder[0] != 'T'))
    return ConceptTag::outside();
  const auto slot = slot_of(remainder[0], body.substr(0, eq));
  if (!slot) return ConceptTag::outside();
  return ConceptTag::of(pos, *slot, body.substr(eq + 1));
}

// One training sequence for the labeler. aux, when non-empty, is an
// additional aligned token layer (the original words in the second tagging
// step).
struct SeqExample {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::vector<std::string> aux;
};

struct FeatureTemplates {
  bool word_window = true;    // current token and offsets +-1, +-2
  bool prev_tag = true;       // previous predicted tag
  bool word_prev_tag = true;  // token x previous-tag conjunction
  bool aux_window = true;     // auxiliary layer at offsets 0, +-1, +-2
};

struct LabelerPreset {
  int epochs = 10;
  bool averaged = true;
};

inline constexpr LabelerPreset kMbtLike{1, false};
inline constexpr LabelerPreset kCrfLike{10, true};

inline LabelerPreset preset_by_name(const std::string& name) {
  if (name == "mbt-like") return kMbtLike;
  if (name == "crf-like") return kCrfLike;
  throw DataError("unknown labeler preset: " + name);
}

// Averaged-perceptron sequence labeler with greedy left-to-right decoding.
// The tag inventory is closed over the training data.
class LinearChainModel {
 public:
  LinearChainModel() = default;

  static LinearChainModel train(const std::vector<SeqExample>& data,
                                const FeatureTemplates& templates, int epochs,
                                bool averaged, std::uint64_t seed) {
    if (data.empty()) throw DataError("cannot train labeler on empty data");
    if (epochs < 1) throw DataError("epochs must be >= 1");
    LinearChainModel m;
    m.templates_ = templates;
    {
      std::map<std::string, int> seen;
      for (const auto& ex : data) {
        if (ex.tokens.size() != ex.labels.size())
          throw DataError("token/label count mismatch in training data");
        if (!ex.aux.empty() && ex.aux.size() != ex.tokens.size())
          throw DataError("token/aux count mismatch in training data");
        for (const auto& l : ex.labels) seen.emplace(l, 0);
      }
      for (const auto& [l, unused] : seen) m.tags_.push_back(l);
      for (std::size_t i = 0; i < m.tags_.size(); ++i)
        m.tag_index_[m.tags_[i]] = static_cast<int>(i);
    }
    const int Y = static_cast<int>(m.tags_.size());

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);  // one fixed shuffle; epochs revisit the same order

    std::unordered_map<std::string, std::vector<double>> acc;  // averaging
    std::vector<std::string> feats;
    std::vector<double> scores(static_cast<std::size_t>(Y));
    double step = 1.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (const std::size_t idx : order) {
        const auto& ex = data[idx];
        std::string prev = kBoundaryTag;
        for (std::size_t t = 0; t < ex.tokens.size(); ++t) {
          m.features(ex.tokens, ex.aux, t, prev, feats);
          const int pred = m.predict(feats, scores);
          const int gold = m.tag_index_.at(ex.labels[t]);
          if (pred != gold) {
            for (const auto& f : feats) {
              auto& row = m.weights_[f];
              if (row.empty()) row.assign(static_cast<std::size_t>(Y), 0.0);
              auto& arow = acc[f];
              if (arow.empty()) arow.assign(static_cast<std::size_t>(Y), 0.0);
              row[static_cast<std::size_t>(gold)] += 1.0;
              row[static_cast<std::size_t>(pred)] -= 1.0;
              arow[static_cast<std::size_t>(gold)] += step;
              arow[static_cast<std::size_t>(pred)] -= step;
            }
          }
          prev = m.tags_[static_cast<std::size_t>(pred)];
          step += 1.0;
        }
      }
    }
    if (averaged) {
      for (auto& [f, row] : m.weights_) {
        const auto& arow = acc[f];
        for (std::size_t y = 0; y < row.size(); ++y) row[y] -= arow[y] / step;
      }
    }
    return m;
  }

  const std::vector<std::string>& tags() const { return tags_; }

  std::vector<std::string> tag(const std::vector<std::string>& tokens,
                               const std::vector<std::string>* aux = nullptr) const {
    if (aux && !aux->empty() && aux->size() != tokens.size())
      throw DataError("token/aux count mismatch");
    static const std::vector<std::string> kNoAux;
    const std::vector<std::string>& a = aux ? *aux : kNoAux;
    std::vector<std::string> out;
    std::vector<std::string> feats;
    std::vector<double> scores(tags_.size());
    std::string prev = kBoundaryTag;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      features(tokens, a, t, prev, feats);
      const int pred = predict(feats, scores);
      prev = tags_[static_cast<std::size_t>(pred)];
      out.push_back(prev);
    }
    return out;
  }

  // Versioned text form (templates, tag inventory, sparse weights); also the
  // serialization format.
  std::string to_text() const {
    std::ostringstream out;
    out << "slotgram-labeler 1\n";
    out << "templates " << templates_.word_window << ' ' << templates_.prev_tag
        << ' ' << templates_.word_prev_tag << ' ' << templates_.aux_window << "\n";
    out << "tags " << tags_.size() << "\n";
    for (const auto& t : tags_) out << t << "\n";
    std::vector<std::pair<std::string, const std::vector<double>*>> rows;
    for (const auto& [f, row] : weights_) rows.emplace_back(f, &row);
    std::sort(rows.begin(), rows.end());
    std::size_t n = 0;
    for (const auto& [f, row] : rows)
      for (double w : *row)
        if (w != 0.0) ++n;
    out << "weights " << n << "\n";
    for (const auto& [f, row] : rows)
      for (std::size_t y = 0; y < row->size(); ++y)
        if ((*row)[y] != 0.0)
          out << f << '\t' << tags_[y] << '\t' << fmt_g17((*row)[y]) << "\n";
    return out.str();
  }

  static LinearChainModel from_text(std::istream& in, const std::string& what) {
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(what + ": " + why);
    };
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "slotgram-labeler" || version != 1)
      throw fail("bad labeler header");
    LinearChainModel m;
    if (!(in >> word >> m.templates_.word_window >> m.templates_.prev_tag >>
          m.templates_.word_prev_tag >> m.templates_.aux_window) ||
        word != "templates")
      throw fail("bad templates record");
    std::size_t n = 0;
    if (!(in >> word >> n) || word != "tags") throw fail("bad tags record");
    m.tags_.resize(n);
    for (auto& t : m.tags_)
      if (!(in >> t)) throw fail("truncated tag inventory");
    for (std::size_t i = 0; i < m.tags_.size(); ++i)
      m.tag_index_[m.tags_[i]] = static_cast<int>(i);
    if (!(in >> word >> n) || word != "weights") throw fail("bad weights record");
    in.ignore();
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw fail("truncated weights");
      const auto t1 = line.find('\t');
      const auto t2 = line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos)
        throw fail("bad weight line: " + line);
      const std::string feat = line.substr(0, t1);
      const std::string tag = line.substr(t1 + 1, t2 - t1 - 1);
      auto it = m.tag_index_.find(tag);
      if (it == m.tag_index_.end()) throw fail("weight for unknown tag " + tag);
      auto& row = m.weights_[feat];
      if (row.empty()) row.assign(m.tags_.size(), 0.0);
      row[static_cast<std::size_t>(it->second)] = std::stod(line.substr(t2 + 1));
    }
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_text();
    if (!out) throw IoError("failed writing " + path);
  }

  static LinearChainModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    return from_text(in, path);
  }

 private:
  static constexpr const char* kBoundaryTag = "<bos>";

  static std::string at(const std::vector<std::string>& xs, std::ptrdiff_t i) {
    if (i < 0) return "<s>";
    if (i >= static_cast<std::ptrdiff_t>(xs.size())) return "</s>";
    return xs[static_cast<std::size_t>(i)];
  }

  void features(const std::vector<std::string>& toks,
                const std::vector<std::string>& aux, std::size_t t,
                const std::string& prev, std::vector<std::string>& out) const {
    const auto i = static_cast<std::ptrdiff_t>(t);
    out.clear();
    out.push_back("b");
    if (templates_.word_window) {
      out.push_back("w0=" + toks[t]);
      out.push_back("w-1=" + at(toks, i - 1));
      out.push_back("w-2=" + at(toks, i - 2));
      out.push_back("w+1=" + at(toks, i + 1));
      out.push_back("w+2=" + at(toks, i + 2));
    }
    if (templates_.prev_tag) out.push_back("p=" + prev);
    if (templates_.word_prev_tag) out.push_back("wp=" + toks[t] + "|" + prev);
    if (templates_.aux_window && !aux.empty()) {
      out.push_back("a0=" + aux[t]);
      out.push_back("a-1=" + at(aux, i - 1));
      out.push_back("a-2=" + at(aux, i - 2));
      out.push_back("a+1=" + at(aux, i + 1));
      out.push_back("a+2=" + at(aux, i + 2));
    }
  }

  // Argmax over tags; ties resolve to the smallest tag index, which is the
  // lexicographically smallest tag since the inventory is sorted.
  int predict(const std::vector<std::string>& feats,
              std::vector<double>& scores) const {
    std::fill(scores.begin(), scores.end(), 0.0);
    for (const auto& f : feats) {
      auto it = weights_.find(f);
      if (it == weights_.end()) continue;
      const auto& row = it->second;
      for (std::size_t y = 0; y < row.size(); ++y) scores[y] += row[y];
    }
    int best = 0;
    for (int y = 1; y < static_cast<int>(scores.size()); ++y)
      if (scores[static_cast<std::size_t>(y)] > scores[static_cast<std::size_t>(best)])
        best = y;
    return best;
  }

  std::vector<std::string> tags_;
  std::map<std::string, int> tag_index_;
  FeatureTemplates templates_;
  std::unordered_map<std::string, std::vector<double>> weights_;
};

inline LinearChainModel train_labeler(const std::vector<SeqExample>& data,
                                      const FeatureTemplates& templates,
                                      int epochs, bool averaged,
                                      std::uint64_t seed) {
  return LinearChainModel::train(data, templates, epochs, averaged, seed);
}

// Step 1 tags words with facet-generalized tags; step 2 tags step 1's output
// symbols with the facet remainder, seeing the words as an auxiliary layer.
struct TwoStepModel {
  LinearChainModel step1;
  LinearChainModel step2;
};

inline TwoStepModel train_two_step(const std::vector<TaggedUtterance>& data,
                                   const LabelerPreset& preset,
                                   std::uint64_t seed) {
  if (data.empty()) throw DataError("cannot train two-step model on empty data");
  std::vector<SeqExample> step1_data, step2_data;
  for (const auto& u : data) {
    SeqExample e1, e2;
    e1.tokens = u.words;
    e2.aux = u.words;
    for (const auto& tag : u.tags) {
      auto [gen, rem] = decompose_tag(tag);
      e1.labels.push_back(gen);
      e2.tokens.push_back(gen);  // gold portions at training time
      e2.labels.push_back(rem);
    }
    step1_data.push_back(std::move(e1));
    step2_data.push_back(std::move(e2));
  }
  TwoStepModel m;
  m.step1 = LinearChainModel::train(step1_data, FeatureTemplates{}, preset.epochs,
                                    preset.averaged, seed);
  m.step2 = LinearChainModel::train(step2_data, FeatureTemplates{}, preset.epochs,
                                    preset.averaged, seed);
  return m;
}

inline TaggedUtterance tag_two_step(const TwoStepModel& model,
                                    const std::vector<std::string>& words) {
  TaggedUtterance out;
  out.words = words;
  const std::vector<std::string> gen = model.step1.tag(words);
  const std::vector<std::string> rem = model.step2.tag(gen, &words);
  for (std::size_t t = 0; t < words.size(); ++t)
    out.tags.push_back(compose_tags(gen[t], rem[t]));
  return out;
}

inline void save_two_step(const TwoStepModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "slotgram-two-step 1\n" << m.step1.to_text() << m.step2.to_text();
  if (!out) throw IoError("failed writing " + path);
}

inline TwoStepModel load_two_step(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != "slotgram-two-step" || version != 1)
    throw ParseError(path + ": bad two-step model header");
  TwoStepModel m;
  m.step1 = LinearChainModel::from_text(in, path);
  m.step2 = LinearChainModel::from_text(in, path);
  return m;
}

}  // namespace slotgram
