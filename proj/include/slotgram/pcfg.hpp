#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "slotgram/corpus.hpp"
#include "slotgram/logmath.hpp"
#include "slotgram/tags.hpp"
#include "slotgram/textfmt.hpp"

namespace slotgram {

// Phrase-structure node. Nonterminals: ROOT, the facets F/T, the families
// S/V/C/FOUND/H, O, DC, and the value symbols (h, d, c, s, 1..13, col1..col7,
// f1..f4, hand). Terminal nodes hold a word in `label`.
struct TreeNode {
  std::string label;
  bool terminal = false;
  std::vector<TreeNode> children;

  bool operator==(const TreeNode&) const = default;

  static TreeNode word(std::string w) { return {std::move(w), true, {}}; }
  static TreeNode node(std::string l, std::vector<TreeNode> kids) {
    return {std::move(l), false, std::move(kids)};
  }

  std::vector<std::string> leaves() const {
    std::vector<std::string> out;
    collect_leaves(out);
    return out;
  }

  // (ROOT (O leg de) (F (S (h harten)) (V (5 vijf))) ...)
  std::string bracketed() const {
    std::string out;
    print(out);
    return out;
  }

 private:
  void collect_leaves(std::vector<std::string>& out) const {
    if (terminal) {
      out.push_back(label);
      return;
    }
    for (const auto& c : children) c.collect_leaves(out);
  }
  void print(std::string& out) const {
    if (terminal) {
      out += label;
      return;
    }
    out += '(';
    out += label;
    for (const auto& c : children) {
      out += ' ';
      c.print(out);
    }
    out += ')';
  }
};

inline const std::set<std::string>& value_symbols() {
  static const std::set<std::string> syms = [] {
    std::set<std::string> s;
    const FrameSchema& schema = FrameSchema::patience();
    for (const auto& v : schema.domain("FS")) s.insert(v);
    for (const auto& v : schema.domain("FV")) s.insert(v);
    for (const auto& v : schema.domain("FC")) s.insert("col" + v);
    for (const auto& v : schema.domain("FF")) s.insert("f" + v);
    s.insert("hand");
    return s;
  }();
  return syms;
}

inline bool is_value_symbol(const std::string& sym) {
  return value_symbols().count(sym) != 0;
}

namespace detail {

inline std::string value_symbol_for(const std::string& family,
                                    const std::string& value) {
  if (family == "C") return "col" + value;
  if (family == "FOUND") return "f" + value;
  return value;  // S, V and H use the value itself
}

inline std::string value_from_symbol(const std::string& family,
                                     const std::string& sym) {
  if (family == "C" && sym.rfind("col", 0) == 0) return sym.substr(3);
  if (family == "FOUND" && sym.rfind("f", 0) == 0) return sym.substr(1);
  return sym;
}

inline bool is_family_symbol(const std::string& sym) {
  return sym == "S" || sym == "V" || sym == "C" || sym == "FOUND" || sym == "H";
}

// Joins adjacent siblings with the same nonterminal label, level by level:
// two O chunks become one O, two F constituents merge their family children,
// and merged families then merge their value nodes.
inline std::vector<TreeNode> join_adjacent(std::vector<TreeNode> kids) {
  std::vector<TreeNode> out;
  for (auto& k : kids) {
    if (!out.empty() && !k.terminal && !out.back().terminal &&
        out.back().label == k.label) {
      for (auto& c : k.children) out.back().children.push_back(std::move(c));
    } else {
      out.push_back(std::move(k));
    }
  }
  for (auto& k : out)
    if (!k.terminal) k.children = join_adjacent(std::move(k.children));
  return out;
}

}  // namespace detail

// Per-token subtrees (O -> word, DC -> word, facet -> family -> value ->
// word) joined bottom-up under ROOT. Any tag sequence yields a tree.
inline TreeNode tags_to_tree(const TaggedUtterance& tagged) {
  if (tagged.words.size() != tagged.tags.size())
    throw DataError("word/tag count mismatch");
  std::vector<TreeNode> tops;
  for (std::size_t t = 0; t < tagged.words.size(); ++t) {
    const auto& tag = tagged.tags[t];
    TreeNode w = TreeNode::word(tagged.words[t]);
    if (tag.is_outside()) {
      tops.push_back(TreeNode::node("O", {std::move(w)}));
    } else if (tag.is_dealcard()) {
      tops.push_back(TreeNode::node("DC", {std::move(w)}));
    } else {
      const std::string family = family_of_slot(tag.slot);
      tops.push_back(TreeNode::node(
          std::string(1, facet_of_slot(tag.slot)),
          {TreeNode::node(
              family,
              {TreeNode::node(detail::value_symbol_for(family, tag.value),
                              {std::move(w)})})}));
    }
  }
  return TreeNode::node("ROOT", detail::join_adjacent(std::move(tops)));
}

// Exact inverse of tags_to_tree on its image.
inline TaggedUtterance tree_to_tags(const TreeNode& tree) {
  if (tree.terminal || tree.label != "ROOT")
    throw SchemaError("derivation tree must be rooted at ROOT");
  const FrameSchema& schema = FrameSchema::patience();
  TaggedUtterance out;
  auto emit_words = [&](const TreeNode& n, const ConceptTag& tag) {
    if (n.children.empty()) throw SchemaError("chunk node without words");
    for (const auto& w : n.children) {
      if (!w.terminal)
        throw SchemaError("expected terminal word under " + n.label);
      out.words.push_back(w.label);
      out.tags.push_back(tag);
    }
  };
  for (const auto& top : tree.children) {
    if (top.terminal) throw SchemaError("word directly under ROOT");
    if (top.label == "O") {
      emit_words(top, ConceptTag::outside());
    } else if (top.label == "DC") {
      emit_words(top, ConceptTag::dealcard());
    } else if (top.label == "F" || top.label == "T") {
      for (const auto& fam : top.children) {
        if (fam.terminal || !detail::is_family_symbol(fam.label))
          throw SchemaError("expected family node under " + top.label);
        const auto slot = slot_of(top.label[0], fam.label);
        if (!slot)
          throw SchemaError("no slot for facet " + top.label + " family " +
                            fam.label);
        for (const auto& val : fam.children) {
          if (val.terminal || !is_value_symbol(val.label))
            throw SchemaError("expected value symbol under " + fam.label);
          const std::string value =
              detail::value_from_symbol(fam.label, val.label);
          if (!schema.value_in_domain(*slot, value))
            throw SchemaError("value " + value + " out of domain for " + *slot);
          emit_words(val, ConceptTag::of(TagPos::Inside, *slot, value));
        }
      }
    } else {
      throw SchemaError("unexpected node " + top.label + " under ROOT");
    }
  }
  return out;
}

struct Production {
  std::string lhs;
  std::vector<std::string> rhs;
  bool lexical = false;  // rhs is a word sequence matched as one contiguous run
  long long count = 0;
  double prob = 0.0;

  bool operator==(const Production&) const = default;
};

struct ParseResult {
  std::optional<TreeNode> tree;
  double log_prob = kLogZero;
  double prob = 0.0;

  bool ok() const { return tree.has_value(); }
};

// Relative-frequency PCFG over derivation trees. O, DC and value-symbol
// right-hand sides are atomic word sequences, not per-word preterminals.
class Pcfg {
 public:
  Pcfg() = default;

  static Pcfg induce(const std::vector<TreeNode>& trees) {
    if (trees.empty()) throw DataError("cannot induce a grammar from no trees");
    std::map<std::tuple<std::string, std::vector<std::string>, bool>, long long>
        counts;
    for (const auto& t : trees) count_tree(t, counts);
    Pcfg g;
    for (const auto& [key, c] : counts) {
      const auto& [lhs, rhs, lexical] = key;
      g.prods_.push_back({lhs, rhs, lexical, c, 0.0});
    }
    g.finish();
    return g;
  }

  static Pcfg merge(const std::vector<Pcfg>& grammars) {
    if (grammars.empty()) throw DataError("cannot merge zero grammars");
    std::map<std::tuple<std::string, std::vector<std::string>, bool>, long long>
        counts;
    for (const auto& g : grammars)
      for (const auto& p : g.prods_)
        counts[{p.lhs, p.rhs, p.lexical}] += p.count;
    Pcfg g;
    for (const auto& [key, c] : counts) {
      const auto& [lhs, rhs, lexical] = key;
      g.prods_.push_back({lhs, rhs, lexical, c, 0.0});
    }
    g.finish();
    return g;
  }

  // Drops productions whose relative frequency does not exceed min_rel_freq
  // and renormalizes per left-hand side. Off (0) in the pipeline; used for
  // grammar inspection.
  Pcfg filter_productions(double min_rel_freq) const {
    if (min_rel_freq < 0.0 || min_rel_freq >= 1.0)
      throw DataError("min_rel_freq must lie in [0, 1)");
    Pcfg g;
    std::set<std::string> seen, kept;
    for (const auto& p : prods_) {
      seen.insert(p.lhs);
      if (p.prob > min_rel_freq) {
        g.prods_.push_back(p);
        kept.insert(p.lhs);
      }
    }
    for (const auto& lhs : seen)
      if (!kept.count(lhs))
        throw DataError("filter would drop every production for " + lhs);
    g.finish();
    return g;
  }

  const std::vector<Production>& productions() const { return prods_; }

  std::size_t total_count(const std::string& lhs) const {
    auto it = lhs_total_.find(lhs);
    return it == lhs_total_.end() ? 0 : static_cast<std::size_t>(it->second);
  }

  // Maximum-probability derivation via CYK over an internally binarized
  // grammar (left branching, rule mass on the first piece; auxiliary symbols
  // never surface). Returns no tree when the words cannot be derived.
  ParseResult viterbi_parse(const std::vector<std::string>& words) const {
    if (words.empty()) throw DataError("cannot parse an empty utterance");
    const int T = static_cast<int>(words.size());

    std::map<std::string, int> sym_id;
    std::vector<std::string> sym_names;
    auto intern = [&](const std::string& s) {
      auto [it, fresh] = sym_id.try_emplace(s, static_cast<int>(sym_names.size()));
      if (fresh) sym_names.push_back(s);
      return it->second;
    };

    struct Lex {
      int lhs;
      const std::vector<std::string>* words;
      double logp;
    };
    struct Unary {
      int lhs, rhs;
      double logp;
    };
    struct Binary {
      int lhs, left, right;
      double logp;
    };
    std::vector<Lex> lex;
    std::vector<Unary> unary;
    std::vector<Binary> binary;

    for (std::size_t pi = 0; pi < prods_.size(); ++pi) {
      const auto& p = prods_[pi];
      const int lhs = intern(p.lhs);
      const double lp = std::log(p.prob);
      if (p.lexical) {
        lex.push_back({lhs, &p.rhs, lp});
      } else if (p.rhs.size() == 1) {
        unary.push_back({lhs, intern(p.rhs[0]), lp});
      } else if (p.rhs.size() == 2) {
        binary.push_back({lhs, intern(p.rhs[0]), intern(p.rhs[1]), lp});
      } else {
        int prev = intern("_B" + std::to_string(pi) + "_1");
        binary.push_back({prev, intern(p.rhs[0]), intern(p.rhs[1]), lp});
        for (std::size_t k = 2; k + 1 < p.rhs.size(); ++k) {
          const int aux = intern("_B" + std::to_string(pi) + "_" + std::to_string(k));
          binary.push_back({aux, prev, intern(p.rhs[k]), 0.0});
          prev = aux;
        }
        binary.push_back({lhs, prev, intern(p.rhs.back()), 0.0});
      }
    }
    auto root_it = sym_id.find("ROOT");
    if (root_it == sym_id.end()) return {};
    const int root = root_it->second;
    const int N = static_cast<int>(sym_names.size());

    struct Cell {
      double lp = kLogZero;
      signed char kind = -1;  // 0 lexical, 1 unary, 2 binary
      int a = -1;             // lexical index / unary child / binary left
      int b = -1;             // binary right
      int split = -1;
    };
    // chart[(i, j)] with 0 <= i < j <= T, indexed compactly.
    auto cell_base = [&](int i, int j) {
      return (static_cast<std::size_t>(i) * (T + 1) + static_cast<std::size_t>(j)) *
             static_cast<std::size_t>(N);
    };
    std::vector<Cell> chart(static_cast<std::size_t>(T + 1) * (T + 1) *
                            static_cast<std::size_t>(N));

    for (int len = 1; len <= T; ++len) {
      for (int i = 0; i + len <= T; ++i) {
        const int j = i + len;
        Cell* cell = chart.data() + cell_base(i, j);
        for (std::size_t li = 0; li < lex.size(); ++li) {
          const auto& l = lex[li];
          if (static_cast<int>(l.words->size()) != len) continue;
          bool match = true;
          for (int t = 0; t < len; ++t)
            if ((*l.words)[static_cast<std::size_t>(t)] !=
                words[static_cast<std::size_t>(i + t)]) {
              match = false;
              break;
            }
          if (!match) continue;
          if (l.logp > cell[l.lhs].lp) {
            cell[l.lhs] = {l.logp, 0, static_cast<int>(li), -1, -1};
          }
        }
        for (int m = i + 1; m < j; ++m) {
          const Cell* lcell = chart.data() + cell_base(i, m);
          const Cell* rcell = chart.data() + cell_base(m, j);
          for (const auto& r : binary) {
            if (lcell[r.left].lp == kLogZero || rcell[r.right].lp == kLogZero)
              continue;
            const double lp = (r.logp + lcell[r.left].lp) + rcell[r.right].lp;
            if (lp > cell[r.lhs].lp) cell[r.lhs] = {lp, 2, r.left, r.right, m};
          }
        }
        for (int pass = 0; pass < N; ++pass) {
          bool changed = false;
          for (const auto& r : unary) {
            if (cell[r.rhs].lp == kLogZero) continue;
            const double lp = r.logp + cell[r.rhs].lp;
            if (lp > cell[r.lhs].lp) {
              cell[r.lhs] = {lp, 1, r.rhs, -1, -1};
              changed = true;
            }
          }
          if (!changed) break;
        }
      }
    }

    const Cell& goal = chart[cell_base(0, T) + static_cast<std::size_t>(root)];
    if (goal.lp == kLogZero) return {};

    auto is_aux = [&](int s) {
      return sym_names[static_cast<std::size_t>(s)].rfind("_B", 0) == 0;
    };
    // Mutually recursive build/collect; collect splices auxiliary symbols.
    std::function<TreeNode(int, int, int)> build;
    std::function<void(int, int, int, std::vector<TreeNode>&)> collect;
    collect = [&](int i, int j, int s, std::vector<TreeNode>& out) {
      if (is_aux(s)) {
        const Cell& c = chart[cell_base(i, j) + static_cast<std::size_t>(s)];
        collect(i, c.split, c.a, out);
        collect(c.split, j, c.b, out);
      } else {
        out.push_back(build(i, j, s));
      }
    };
    build = [&](int i, int j, int s) -> TreeNode {
      const Cell& c = chart[cell_base(i, j) + static_cast<std::size_t>(s)];
      const std::string& name = sym_names[static_cast<std::size_t>(s)];
      if (c.kind == 0) {
        std::vector<TreeNode> kids;
        for (int t = i; t < j; ++t)
          kids.push_back(TreeNode::word(words[static_cast<std::size_t>(t)]));
        return TreeNode::node(name, std::move(kids));
      }
      if (c.kind == 1) return TreeNode::node(name, {build(i, j, c.a)});
      std::vector<TreeNode> kids;
      collect(i, c.split, c.a, kids);
      collect(c.split, j, c.b, kids);
      return TreeNode::node(name, std::move(kids));
    };

    ParseResult res;
    res.tree = build(0, T, root);
    res.log_prob = goal.lp;
    res.prob = std::exp(goal.lp);
    return res;
  }

  // Rule lines in the form "LHS -> RHS [probability] count", value-symbol
  // lexicon after a separator line.
  std::string serialize() const {
    std::ostringstream out;
    out << "slotgram-pcfg 1\n";
    for (int lexicon = 0; lexicon <= 1; ++lexicon) {
      if (lexicon) out << "---\n";
      for (const auto& p : prods_) {
        if (static_cast<int>(is_value_symbol(p.lhs)) != lexicon) continue;
        out << p.lhs << " ->";
        for (const auto& s : p.rhs) out << ' ' << s;
        out << " [" << fmt_g17(p.prob) << "] " << p.count << "\n";
      }
    }
    return out.str();
  }

  // Display form: probabilities at six significant digits, no counts, rules
  // whose relative frequency does not exceed `threshold` omitted (with their
  // group renormalized; a group losing every rule is omitted entirely).
  std::string pretty(double threshold = 0.005) const {
    std::map<std::string, long long> kept_total;
    for (const auto& p : prods_)
      if (p.prob > threshold) kept_total[p.lhs] += p.count;
    std::ostringstream out;
    for (int lexicon = 0; lexicon <= 1; ++lexicon) {
      if (lexicon) out << "---\n";
      for (const auto& p : prods_) {
        if (static_cast<int>(is_value_symbol(p.lhs)) != lexicon) continue;
        if (p.prob <= threshold) continue;
        out << p.lhs << " ->";
        for (const auto& s : p.rhs) out << ' ' << s;
        out << " ["
            << fmt_prob(static_cast<double>(p.count) /
                        static_cast<double>(kept_total[p.lhs]))
            << "]\n";
      }
    }
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << serialize();
    if (!out) throw IoError("failed writing " + path);
  }

  static Pcfg parse_text(std::istream& in, const std::string& what) {
    std::string line;
    if (!std::getline(in, line) || line != "slotgram-pcfg 1")
      throw ParseError(what + ": bad grammar header");
    Pcfg g;
    bool lexicon = false;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line == "---") {
        lexicon = true;
        continue;
      }
      std::istringstream ss(line);
      Production p;
      std::string tok;
      if (!(ss >> p.lhs >> tok) || tok != "->")
        throw ParseError(what + ":" + std::to_string(lineno) + ": bad rule line");
      std::vector<std::string> items;
      while (ss >> tok) items.push_back(tok);
      if (items.size() < 3 || items[items.size() - 2].front() != '[' ||
          items[items.size() - 2].back() != ']')
        throw ParseError(what + ":" + std::to_string(lineno) + ": bad rule line");
      p.count = std::stoll(items.back());
      items.pop_back();
      items.pop_back();  // probability is recomputed from counts
      p.rhs = std::move(items);
      if (p.rhs.empty())
        throw ParseError(what + ":" + std::to_string(lineno) + ": empty rhs");
      p.lexical = lexicon || p.lhs == "O" || p.lhs == "DC";
      g.prods_.push_back(std::move(p));
    }
    if (g.prods_.empty()) throw ParseError(what + ": empty grammar");
    g.finish();
    return g;
  }

  static Pcfg load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    return parse_text(in, path);
  }

  bool operator==(const Pcfg& other) const { return prods_ == other.prods_; }

 private:
  static void count_tree(
      const TreeNode& node,
      std::map<std::tuple<std::string, std::vector<std::string>, bool>,
               long long>& counts) {
    if (node.terminal) throw SchemaError("terminal node has no productions");
    if (node.children.empty())
      throw SchemaError("nonterminal " + node.label + " without children");
    const bool lexical = node.children.front().terminal;
    std::vector<std::string> rhs;
    for (const auto& c : node.children) {
      if (c.terminal != lexical)
        throw SchemaError("mixed terminal/nonterminal children under " +
                          node.label);
      rhs.push_back(c.label);
    }
    ++counts[{node.label, rhs, lexical}];
    if (!lexical)
      for (const auto& c : node.children) count_tree(c, counts);
  }

  // Numeric-aware symbol ordering so card values list as 1..13, not 1,10,11.
  static std::pair<int, std::string> symbol_rank(const std::string& s) {
    if (!s.empty() && std::all_of(s.begin(), s.end(),
                                  [](unsigned char c) { return std::isdigit(c); })) {
      std::string padded(8 - std::min<std::size_t>(8, s.size()), '0');
      return {0, padded + s};
    }
    return {1, s};
  }

  static int lhs_rank(const std::string& lhs) {
    static const std::map<std::string, int> ranks = {
        {"ROOT", 0}, {"DC", 1}, {"F", 2},     {"T", 3}, {"S", 4},
        {"V", 5},    {"C", 6},  {"FOUND", 7}, {"H", 8}, {"O", 9}};
    auto it = ranks.find(lhs);
    return it == ranks.end() ? 100 : it->second;
  }

  void finish() {
    std::sort(prods_.begin(), prods_.end(),
              [](const Production& a, const Production& b) {
                const int ra = lhs_rank(a.lhs), rb = lhs_rank(b.lhs);
                if (ra != rb) return ra < rb;
                if (a.lhs != b.lhs) return symbol_rank(a.lhs) < symbol_rank(b.lhs);
                const std::size_t n = std::min(a.rhs.size(), b.rhs.size());
                for (std::size_t i = 0; i < n; ++i) {
                  if (a.rhs[i] != b.rhs[i])
                    return symbol_rank(a.rhs[i]) < symbol_rank(b.rhs[i]);
                }
                return a.rhs.size() < b.rhs.size();
              });
    lhs_total_.clear();
    for (const auto& p : prods_) {
      if (p.count < 1) throw DataError("production with count < 1");
      lhs_total_[p.lhs] += p.count;
    }
    for (auto& p : prods_)
      p.prob = static_cast<double>(p.count) /
               static_cast<double>(lhs_total_[p.lhs]);
  }

  std::vector<Production> prods_;
  std::map<std::string, long long> lhs_total_;
};

}  // namespace slotgram
