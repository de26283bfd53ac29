#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "slotgram/corpus.hpp"
#include "slotgram/logmath.hpp"
#include "slotgram/rng.hpp"
#include "slotgram/tags.hpp"
#include "slotgram/textfmt.hpp"

namespace slotgram {

// Hidden states: O, DC, and one state per movecard (slot, value) pair.
// Expression sharing ties the emission distributions of the from/target
// counterparts of the same slot family and value: (FS,h)/(TS,h) share one
// distribution, (FV,5)/(TV,5) another, and so on. O and DC are singleton
// groups.
struct StateInventory {
  std::vector<std::string> names;                 // state index -> name
  std::vector<int> group_of;                      // state index -> group id
  std::vector<std::string> group_names;           // group id -> name
  std::vector<std::vector<int>> group_members;    // group id -> state indices
  std::map<std::string, int> index_of;            // name -> state index
  std::map<std::string, std::vector<int>> slot_states;  // slot -> states, domain order

  static constexpr int kOutside = 0;
  static constexpr int kDealcard = 1;

  static StateInventory patience() {
    const FrameSchema& schema = FrameSchema::patience();
    StateInventory inv;
    std::map<std::string, int> group_index;
    auto add_state = [&](const std::string& name, const std::string& group) {
      const int id = static_cast<int>(inv.names.size());
      inv.names.push_back(name);
      inv.index_of[name] = id;
      auto [it, fresh] = group_index.try_emplace(
          group, static_cast<int>(inv.group_names.size()));
      if (fresh) {
        inv.group_names.push_back(group);
        inv.group_members.emplace_back();
      }
      inv.group_of.push_back(it->second);
      inv.group_members[it->second].push_back(id);
      return id;
    };
    add_state("O", "O");
    add_state("DC", "DC");
    for (const auto& slot : movecard_slots()) {
      for (const auto& value : schema.domain(slot)) {
        const int id =
            add_state(slot + "=" + value, family_of_slot(slot) + "=" + value);
        inv.slot_states[slot].push_back(id);
      }
    }
    return inv;
  }

  int num_states() const { return static_cast<int>(names.size()); }
  int num_groups() const { return static_cast<int>(group_names.size()); }

  int state_of(const std::string& slot, const std::string& value) const {
    auto it = index_of.find(slot + "=" + value);
    if (it == index_of.end()) throw SchemaError("no state for " + slot + "=" + value);
    return it->second;
  }

  // slot/value states licensed by the utterance's frame, plus O (and DC for
  // dealcard frames). Sorted by state index.
  std::vector<int> allowed_states(const Utterance& u) const {
    std::vector<int> out{kOutside};
    if (u.frame.type == "dealcard") {
      out.push_back(kDealcard);
      return out;
    }
    for (const auto& [slot, values] : u.frame.slots)
      for (const auto& v : values) out.push_back(state_of(slot, v));
    std::sort(out.begin(), out.end());
    return out;
  }

  ConceptTag tag_of_state(int s) const {
    if (s == kOutside) return ConceptTag::outside();
    if (s == kDealcard) return ConceptTag::dealcard();
    const auto& name = names[static_cast<std::size_t>(s)];
    const auto eq = name.find('=');
    return ConceptTag::of(TagPos::Inside, name.substr(0, eq), name.substr(eq + 1));
  }
};

// Per-token distributions over the full state inventory; rows sum to one.
struct TokenPosterior {
  std::vector<std::vector<double>> rows;  // [token][state]
};

inline constexpr double kProbFloor = 1e-6;  // additive floor before normalizing

// Frame-constrained first-order HMM with tied emissions, trained by EM with
// per-utterance state masking. Serves as the weakly supervised decoder: the
// only supervision is the frame attached to each utterance.
class WeakHmm {
 public:
  WeakHmm() = default;

  static WeakHmm init(const FrameSchema& schema,
                      const std::set<std::string>& vocabulary,
                      std::uint64_t seed) {
    (void)schema;  // the inventory is schema-determined
    if (vocabulary.empty()) throw DataError("empty vocabulary");
    WeakHmm m;
    m.inv_ = StateInventory::patience();
    m.vocab_.assign(vocabulary.begin(), vocabulary.end());
    for (std::size_t i = 0; i < m.vocab_.size(); ++i)
      m.vocab_index_[m.vocab_[i]] = static_cast<int>(i);
    m.seed_ = seed;

    const int S = m.inv_.num_states();
    const int G = m.inv_.num_groups();
    const int E = m.num_symbols();
    Rng rng(seed);

    // Emissions start uniform over word symbols plus the unknown symbol (a
    // floor on a uniform row is a no-op after normalization). Initial and
    // transition rows are uniform with a seed-dependent perturbation:
    // independently seeded runs still explore different local optima, but
    // the first E-step stays close to uniform so the word/state association
    // is driven by frame co-occurrence rather than by arbitrary initial
    // transition preferences.
    m.emis_.assign(static_cast<std::size_t>(G) * E, 1.0 / static_cast<double>(E));
    auto random_row = [&](std::span<double> row, int from) {
      double sum = 0.0;
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = 1.0 + 0.2 * rng.uniform() + kProbFloor;
        // Slot chunks are short and a slot family rarely repeats back to
        // back: starting transitions that stay inside one slot family low
        // steers EM toward solutions where filler words alternate through O
        // instead of being absorbed into neighbouring slot chunks (or, for
        // frame-ambiguous value sets, into position-encoding chains). O and
        // DC chunks legitimately span several tokens, so their loops stay
        // uniform. EM may still raise any of these.
        if (from > StateInventory::kDealcard &&
            static_cast<int>(i) > StateInventory::kDealcard &&
            m.inv_.names[static_cast<std::size_t>(from)][0] ==
                m.inv_.names[i][0] &&
            family_of_slot(m.inv_.names[static_cast<std::size_t>(from)]) ==
                family_of_slot(m.inv_.names[i]))
          row[i] *= 0.1;
        sum += row[i];
      }
      for (double& x : row) x /= sum;
    };
    m.initial_.assign(S, 0.0);
    random_row(m.initial_, -1);
    m.trans_.assign(static_cast<std::size_t>(S) * S, 0.0);
    for (int i = 0; i < S; ++i)
      random_row(std::span<double>(m.trans_.data() + static_cast<std::size_t>(i) * S,
                                   static_cast<std::size_t>(S)),
                 i);
    m.refresh_log_cache();
    return m;
  }

  const StateInventory& inventory() const { return inv_; }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  double threshold() const { return threshold_; }
  void set_threshold(double t) {
    if (t < 0.0 || t > 1.0) throw DataError("threshold must lie in [0, 1]");
    threshold_ = t;
  }

  int num_symbols() const { return static_cast<int>(vocab_.size()) + 1; }
  int unknown_symbol() const { return static_cast<int>(vocab_.size()); }

  int symbol_of(const std::string& word) const {
    auto it = vocab_index_.find(word);
    return it == vocab_index_.end() ? unknown_symbol() : it->second;
  }

  double log_initial(int s) const { return log_initial_[static_cast<std::size_t>(s)]; }
  double log_transition(int i, int j) const {
    return log_trans_[static_cast<std::size_t>(i) * inv_.num_states() + j];
  }
  double log_emission_group(int g, int sym) const {
    return log_emis_[static_cast<std::size_t>(g) * num_symbols() + sym];
  }
  double log_emission(int state, int sym) const {
    return log_emission_group(inv_.group_of[static_cast<std::size_t>(state)], sym);
  }
  double initial(int s) const { return initial_[static_cast<std::size_t>(s)]; }
  double transition(int i, int j) const {
    return trans_[static_cast<std::size_t>(i) * inv_.num_states() + j];
  }
  double emission_group(int g, int sym) const {
    return emis_[static_cast<std::size_t>(g) * num_symbols() + sym];
  }

  std::vector<int> allowed_states(const Utterance& u) const {
    return inv_.allowed_states(u);
  }

  // EM training with forward-backward restricted to each utterance's allowed
  // states. The M-step pools expected counts, pooling emission counts within
  // each sharing group. Returns the log-likelihood trace, one entry per
  // iteration, evaluated under the parameters that iteration started from.
  std::vector<double> train_em(const Corpus& corpus, int max_iter,
                               double rel_tol) {
    if (max_iter < 1) throw DataError("max_iter must be >= 1");
    const int S = inv_.num_states();
    const int G = inv_.num_groups();
    const int E = num_symbols();

    struct Item {
      std::vector<int> toks;
      std::vector<int> states;
    };
    std::vector<Item> items;
    std::map<std::string, std::size_t> word_count;
    for (const auto& u : corpus.utterances) {
      validate_utterance(corpus.schema, u);
      Item it;
      for (const auto& w : u.words) {
        it.toks.push_back(symbol_of(w));
        ++word_count[w];
      }
      it.states = inv_.allowed_states(u);
      if (it.states.empty()) throw DataError("utterance with empty state mask");
      items.push_back(std::move(it));
    }
    // Count-1 words contribute half their expected emission mass to the
    // unknown symbol, so unseen words at decode time are not locked out.
    std::vector<bool> singleton(static_cast<std::size_t>(E), false);
    for (const auto& [w, c] : word_count)
      if (c == 1) singleton[static_cast<std::size_t>(symbol_of(w))] = true;

    std::vector<double> init_c, trans_c, emis_c, trace;
    std::vector<double> la, lb, lem, sub, scratch;
    double prev_ll = 0.0;

    for (int iter = 0; iter < max_iter; ++iter) {
      init_c.assign(static_cast<std::size_t>(S), 0.0);
      trans_c.assign(static_cast<std::size_t>(S) * S, 0.0);
      emis_c.assign(static_cast<std::size_t>(G) * E, 0.0);
      double ll = 0.0;

      for (const auto& item : items) {
        const int T = static_cast<int>(item.toks.size());
        const int K = static_cast<int>(item.states.size());
        la.assign(static_cast<std::size_t>(T) * K, kLogZero);
        lb.assign(static_cast<std::size_t>(T) * K, 0.0);
        lem.assign(static_cast<std::size_t>(T) * K, 0.0);
        sub.assign(static_cast<std::size_t>(K) * K, 0.0);
        for (int j = 0; j < K; ++j)
          for (int k = 0; k < K; ++k)
            sub[static_cast<std::size_t>(j) * K + k] =
                log_transition(item.states[j], item.states[k]);
        for (int t = 0; t < T; ++t)
          for (int k = 0; k < K; ++k)
            lem[static_cast<std::size_t>(t) * K + k] =
                log_emission(item.states[k], item.toks[t]);

        for (int k = 0; k < K; ++k)
          la[k] = log_initial(item.states[k]) + lem[k];
        scratch.assign(static_cast<std::size_t>(K), 0.0);
        for (int t = 1; t < T; ++t) {
          for (int k = 0; k < K; ++k) {
            for (int j = 0; j < K; ++j)
              scratch[j] = la[static_cast<std::size_t>(t - 1) * K + j] +
                           sub[static_cast<std::size_t>(j) * K + k];
            la[static_cast<std::size_t>(t) * K + k] =
                log_sum(scratch) + lem[static_cast<std::size_t>(t) * K + k];
          }
        }
        const double llu = log_sum(std::span<const double>(
            la.data() + static_cast<std::size_t>(T - 1) * K, static_cast<std::size_t>(K)));
        ll += llu;

        for (int t = T - 2; t >= 0; --t) {
          for (int j = 0; j < K; ++j) {
            for (int k = 0; k < K; ++k)
              scratch[k] = sub[static_cast<std::size_t>(j) * K + k] +
                           lem[static_cast<std::size_t>(t + 1) * K + k] +
                           lb[static_cast<std::size_t>(t + 1) * K + k];
            lb[static_cast<std::size_t>(t) * K + j] = log_sum(scratch);
          }
        }

        for (int t = 0; t < T; ++t) {
          for (int k = 0; k < K; ++k) {
            const double g = std::exp(la[static_cast<std::size_t>(t) * K + k] +
                                      lb[static_cast<std::size_t>(t) * K + k] - llu);
            if (t == 0) init_c[static_cast<std::size_t>(item.states[k])] += g;
            const int grp = inv_.group_of[static_cast<std::size_t>(item.states[k])];
            const int sym = item.toks[static_cast<std::size_t>(t)];
            double* row = emis_c.data() + static_cast<std::size_t>(grp) * E;
            if (singleton[static_cast<std::size_t>(sym)]) {
              row[sym] += 0.5 * g;
              row[unknown_symbol()] += 0.5 * g;
            } else {
              row[sym] += g;
            }
          }
        }
        for (int t = 0; t + 1 < T; ++t) {
          for (int j = 0; j < K; ++j) {
            const double base = la[static_cast<std::size_t>(t) * K + j];
            double* row =
                trans_c.data() + static_cast<std::size_t>(item.states[j]) * S;
            for (int k = 0; k < K; ++k) {
              const double x = std::exp(
                  base + sub[static_cast<std::size_t>(j) * K + k] +
                  lem[static_cast<std::size_t>(t + 1) * K + k] +
                  lb[static_cast<std::size_t>(t + 1) * K + k] - llu);
              row[item.states[k]] += x;
            }
          }
        }
      }

      trace.push_back(ll);

      auto renormalize = [](std::span<const double> counts, std::span<double> out) {
        double sum = 0.0;
        for (double c : counts) sum += c + kProbFloor;
        for (std::size_t i = 0; i < counts.size(); ++i)
          out[i] = (counts[i] + kProbFloor) / sum;
      };
      renormalize(init_c, initial_);
      for (int i = 0; i < S; ++i)
        renormalize(
            std::span<const double>(trans_c.data() + static_cast<std::size_t>(i) * S,
                                    static_cast<std::size_t>(S)),
            std::span<double>(trans_.data() + static_cast<std::size_t>(i) * S,
                              static_cast<std::size_t>(S)));
      for (int g = 0; g < G; ++g)
        renormalize(
            std::span<const double>(emis_c.data() + static_cast<std::size_t>(g) * E,
                                    static_cast<std::size_t>(E)),
            std::span<double>(emis_.data() + static_cast<std::size_t>(g) * E,
                              static_cast<std::size_t>(E)));
      refresh_log_cache();

      if (iter > 0 && ll - prev_ll < rel_tol * std::abs(prev_ll)) break;
      prev_ll = ll;
    }
    return trace;
  }

  // Maximum-probability state path; ties resolve to the lexicographically
  // smallest state sequence under the inventory ordering. A mask restricts
  // the path to the given states (used when self-labeling training data,
  // where the frame is known); evaluation decoding runs unmasked.
  TaggedUtterance viterbi_decode(
      const std::vector<std::string>& words,
      const std::optional<std::vector<int>>& mask = std::nullopt) const {
    if (words.empty()) throw DataError("cannot decode an empty utterance");
    std::vector<int> states;
    if (mask) {
      states = *mask;
      std::sort(states.begin(), states.end());
      if (states.empty()) throw DataError("empty decode mask");
    } else {
      states.resize(static_cast<std::size_t>(inv_.num_states()));
      for (int s = 0; s < inv_.num_states(); ++s) states[static_cast<std::size_t>(s)] = s;
    }
    const int K = static_cast<int>(states.size());
    const int T = static_cast<int>(words.size());
    std::vector<int> toks;
    for (const auto& w : words) toks.push_back(symbol_of(w));

    std::vector<double> score(static_cast<std::size_t>(K));
    std::vector<std::vector<int>> path(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      score[static_cast<std::size_t>(k)] =
          log_initial(states[static_cast<std::size_t>(k)]) +
          log_emission(states[static_cast<std::size_t>(k)], toks[0]);
      path[static_cast<std::size_t>(k)] = {states[static_cast<std::size_t>(k)]};
    }
    for (int t = 1; t < T; ++t) {
      std::vector<double> next_score(static_cast<std::size_t>(K), kLogZero);
      std::vector<std::vector<int>> next_path(static_cast<std::size_t>(K));
      for (int k = 0; k < K; ++k) {
        double best = kLogZero;
        int best_j = -1;
        for (int j = 0; j < K; ++j) {
          const double cand =
              score[static_cast<std::size_t>(j)] +
              log_transition(states[static_cast<std::size_t>(j)],
                             states[static_cast<std::size_t>(k)]) +
              log_emission(states[static_cast<std::size_t>(k)], toks[t]);
          if (best_j < 0 || cand > best ||
              (cand == best &&
               path[static_cast<std::size_t>(j)] < path[static_cast<std::size_t>(best_j)])) {
            best = cand;
            best_j = j;
          }
        }
        next_score[static_cast<std::size_t>(k)] = best;
        next_path[static_cast<std::size_t>(k)] = path[static_cast<std::size_t>(best_j)];
        next_path[static_cast<std::size_t>(k)].push_back(states[static_cast<std::size_t>(k)]);
      }
      score = std::move(next_score);
      path = std::move(next_path);
    }
    int best_k = 0;
    for (int k = 1; k < K; ++k) {
      if (score[static_cast<std::size_t>(k)] > score[static_cast<std::size_t>(best_k)] ||
          (score[static_cast<std::size_t>(k)] == score[static_cast<std::size_t>(best_k)] &&
           path[static_cast<std::size_t>(k)] < path[static_cast<std::size_t>(best_k)]))
        best_k = k;
    }
    TaggedUtterance out;
    out.words = words;
    for (int s : path[static_cast<std::size_t>(best_k)])
      out.tags.push_back(inv_.tag_of_state(s));
    return out;
  }

  // Forward-backward state marginals; every row sums to one. With a mask the
  // distribution is over the masked states (other entries are zero).
  TokenPosterior token_posteriors(
      const std::vector<std::string>& words,
      const std::optional<std::vector<int>>& mask = std::nullopt) const {
    if (words.empty()) throw DataError("cannot decode an empty utterance");
    std::vector<int> states;
    if (mask) {
      states = *mask;
      std::sort(states.begin(), states.end());
      if (states.empty()) throw DataError("empty posterior mask");
    } else {
      states.resize(static_cast<std::size_t>(inv_.num_states()));
      for (int s = 0; s < inv_.num_states(); ++s) states[static_cast<std::size_t>(s)] = s;
    }
    const int K = static_cast<int>(states.size());
    const int T = static_cast<int>(words.size());
    std::vector<int> toks;
    for (const auto& w : words) toks.push_back(symbol_of(w));

    std::vector<double> la(static_cast<std::size_t>(T) * K, kLogZero);
    std::vector<double> lb(static_cast<std::size_t>(T) * K, 0.0);
    std::vector<double> scratch(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
      la[static_cast<std::size_t>(k)] =
          log_initial(states[static_cast<std::size_t>(k)]) +
          log_emission(states[static_cast<std::size_t>(k)], toks[0]);
    for (int t = 1; t < T; ++t) {
      for (int k = 0; k < K; ++k) {
        for (int j = 0; j < K; ++j)
          scratch[static_cast<std::size_t>(j)] =
              la[static_cast<std::size_t>(t - 1) * K + j] +
              log_transition(states[static_cast<std::size_t>(j)],
                             states[static_cast<std::size_t>(k)]);
        la[static_cast<std::size_t>(t) * K + k] =
            log_sum(scratch) +
            log_emission(states[static_cast<std::size_t>(k)], toks[t]);
      }
    }
    for (int t = T - 2; t >= 0; --t) {
      for (int j = 0; j < K; ++j) {
        for (int k = 0; k < K; ++k)
          scratch[static_cast<std::size_t>(k)] =
              log_transition(states[static_cast<std::size_t>(j)],
                             states[static_cast<std::size_t>(k)]) +
              log_emission(states[static_cast<std::size_t>(k)], toks[t + 1]) +
              lb[static_cast<std::size_t>(t + 1) * K + k];
        lb[static_cast<std::size_t>(t) * K + j] = log_sum(scratch);
      }
    }
    const double llu = log_sum(std::span<const double>(
        la.data() + static_cast<std::size_t>(T - 1) * K, static_cast<std::size_t>(K)));

    TokenPosterior post;
    post.rows.assign(static_cast<std::size_t>(T),
                     std::vector<double>(static_cast<std::size_t>(inv_.num_states()), 0.0));
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k)
        post.rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(
            states[static_cast<std::size_t>(k)])] =
            std::exp(la[static_cast<std::size_t>(t) * K + k] +
                     lb[static_cast<std::size_t>(t) * K + k] - llu);
    return post;
  }

  // Slot scores are summed posteriors. The frame type is dealcard when the
  // DC mass outweighs the total slot/value mass; dealcard frames carry no
  // slots. A slot is filled with its argmax value when the score strictly
  // exceeds the threshold.
  SemanticFrame fill_frame_weak(const std::vector<std::string>& words) const {
    const TokenPosterior post = token_posteriors(words);
    std::vector<double> scores(static_cast<std::size_t>(inv_.num_states()), 0.0);
    for (const auto& row : post.rows)
      for (std::size_t s = 0; s < row.size(); ++s) scores[s] += row[s];
    return frame_from_state_scores(inv_, scores, threshold_);
  }

  static SemanticFrame frame_from_state_scores(const StateInventory& inv,
                                               std::span<const double> scores,
                                               double theta) {
    double dc_mass = scores[StateInventory::kDealcard];
    double slot_mass = 0.0;
    for (int s = 2; s < inv.num_states(); ++s)
      slot_mass += scores[static_cast<std::size_t>(s)];
    if (dc_mass > slot_mass) return SemanticFrame::dealcard();

    SemanticFrame frame = SemanticFrame::movecard();
    for (const auto& slot : movecard_slots()) {
      const auto& states = inv.slot_states.at(slot);
      double best = kLogZero;
      int best_state = -1;
      for (int s : states) {
        const double sc = scores[static_cast<std::size_t>(s)];
        if (sc > best) {
          best = sc;
          best_state = s;
        }
      }
      if (best_state >= 0 && best > theta) {
        const auto& name = inv.names[static_cast<std::size_t>(best_state)];
        frame.slots[slot].insert(name.substr(name.find('=') + 1));
      }
    }
    return frame;
  }

  // Versioned text serialization; matrices in row-major decimal at 17
  // significant digits, so save/load round-trips exactly.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "slotgram-weakhmm 1\n";
    out << "seed " << seed_ << "\n";
    out << "threshold " << fmt_g17(threshold_) << "\n";
    out << "states " << inv_.num_states() << "\n";
    for (const auto& n : inv_.names) out << n << "\n";
    out << "groups " << inv_.num_groups() << "\n";
    for (int g = 0; g < inv_.num_groups(); ++g) {
      out << inv_.group_names[static_cast<std::size_t>(g)];
      for (int s : inv_.group_members[static_cast<std::size_t>(g)]) out << ' ' << s;
      out << "\n";
    }
    out << "vocab " << vocab_.size() << "\n";
    for (const auto& w : vocab_) out << w << "\n";
    auto row = [&](std::span<const double> xs) {
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out << ' ';
        out << fmt_g17(xs[i]);
      }
      out << "\n";
    };
    out << "initial\n";
    row(initial_);
    out << "transition\n";
    const int S = inv_.num_states();
    for (int i = 0; i < S; ++i)
      row(std::span<const double>(trans_.data() + static_cast<std::size_t>(i) * S,
                                  static_cast<std::size_t>(S)));
    out << "emission\n";
    const int E = num_symbols();
    for (int g = 0; g < inv_.num_groups(); ++g)
      row(std::span<const double>(emis_.data() + static_cast<std::size_t>(g) * E,
                                  static_cast<std::size_t>(E)));
    if (!out) throw IoError("failed writing " + path);
  }

  static WeakHmm load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    auto fail = [&](const std::string& why) -> ParseError {
      return ParseError(path + ": " + why);
    };
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "slotgram-weakhmm" || version != 1)
      throw fail("bad model header");
    WeakHmm m;
    m.inv_ = StateInventory::patience();
    int n = 0;
    if (!(in >> word >> m.seed_) || word != "seed") throw fail("bad seed record");
    if (!(in >> word >> m.threshold_) || word != "threshold")
      throw fail("bad threshold record");
    if (!(in >> word >> n) || word != "states" || n != m.inv_.num_states())
      throw fail("state count mismatch");
    for (int i = 0; i < n; ++i) {
      if (!(in >> word) || word != m.inv_.names[static_cast<std::size_t>(i)])
        throw fail("state name mismatch");
    }
    if (!(in >> word >> n) || word != "groups" || n != m.inv_.num_groups())
      throw fail("group count mismatch");
    in.ignore();
    for (int g = 0; g < n; ++g) {
      std::string line;
      if (!std::getline(in, line)) throw fail("truncated groups section");
      std::istringstream ss(line);
      std::string name;
      ss >> name;
      if (name != m.inv_.group_names[static_cast<std::size_t>(g)])
        throw fail("group name mismatch");
      std::vector<int> members;
      int s;
      while (ss >> s) members.push_back(s);
      if (members != m.inv_.group_members[static_cast<std::size_t>(g)])
        throw fail("group membership mismatch");
    }
    std::size_t vn = 0;
    if (!(in >> word >> vn) || word != "vocab") throw fail("bad vocab record");
    m.vocab_.resize(vn);
    for (auto& w : m.vocab_)
      if (!(in >> w)) throw fail("truncated vocabulary");
    for (std::size_t i = 0; i < m.vocab_.size(); ++i)
      m.vocab_index_[m.vocab_[i]] = static_cast<int>(i);

    const int S = m.inv_.num_states();
    const int G = m.inv_.num_groups();
    const int E = m.num_symbols();
    auto read_row = [&](std::span<double> out_row) {
      for (double& x : out_row) {
        if (!(in >> x)) throw fail("truncated matrix");
      }
    };
    if (!(in >> word) || word != "initial") throw fail("missing initial section");
    m.initial_.assign(static_cast<std::size_t>(S), 0.0);
    read_row(m.initial_);
    if (!(in >> word) || word != "transition") throw fail("missing transition section");
    m.trans_.assign(static_cast<std::size_t>(S) * S, 0.0);
    for (int i = 0; i < S; ++i)
      read_row(std::span<double>(m.trans_.data() + static_cast<std::size_t>(i) * S,
                                 static_cast<std::size_t>(S)));
    if (!(in >> word) || word != "emission") throw fail("missing emission section");
    m.emis_.assign(static_cast<std::size_t>(G) * E, 0.0);
    for (int g = 0; g < G; ++g)
      read_row(std::span<double>(m.emis_.data() + static_cast<std::size_t>(g) * E,
                                 static_cast<std::size_t>(E)));
    m.refresh_log_cache();
    return m;
  }

  bool operator==(const WeakHmm& other) const {
    return vocab_ == other.vocab_ && initial_ == other.initial_ &&
           trans_ == other.trans_ && emis_ == other.emis_ &&
           threshold_ == other.threshold_ && seed_ == other.seed_;
  }

 private:
  void refresh_log_cache() {
    auto to_log = [](const std::vector<double>& in_v, std::vector<double>& out_v) {
      out_v.resize(in_v.size());
      for (std::size_t i = 0; i < in_v.size(); ++i) out_v[i] = std::log(in_v[i]);
    };
    to_log(initial_, log_initial_);
    to_log(trans_, log_trans_);
    to_log(emis_, log_emis_);
  }

  StateInventory inv_;
  std::vector<std::string> vocab_;
  std::map<std::string, int> vocab_index_;
  // Linear probabilities are the source of truth (serialized form); the log
  // copies back the dynamic programming.
  std::vector<double> initial_;      // S
  std::vector<double> trans_;        // S x S, row-major
  std::vector<double> emis_;         // G x (V+1), last column = unknown word
  std::vector<double> log_initial_;
  std::vector<double> log_trans_;
  std::vector<double> log_emis_;
  double threshold_ = 0.5;
  std::uint64_t seed_ = 0;
};

inline std::set<std::string> corpus_vocabulary(const Corpus& corpus) {
  std::set<std::string> vocab;
  for (const auto& u : corpus.utterances)
    vocab.insert(u.words.begin(), u.words.end());
  return vocab;
}

}  // namespace slotgram
