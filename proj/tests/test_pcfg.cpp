#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "slotgram/pcfg.hpp"
#include "slotgram/rng.hpp"
#include "slotgram/synth.hpp"

using namespace slotgram;

namespace {

TaggedUtterance tagged(std::vector<std::string> words,
                       std::vector<std::string> tag_strings) {
  TaggedUtterance u;
  u.words = std::move(words);
  for (const auto& t : tag_strings) u.tags.push_back(ConceptTag::parse(t));
  return u;
}

TaggedUtterance reference_command() {
  return tagged({"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"},
                {"O", "O", "I_FS=h", "I_FV=5", "O", "O", "I_TS=c", "I_TV=6"});
}

std::map<std::string, double> prob_table(const Pcfg& g) {
  std::map<std::string, double> out;
  for (const auto& p : g.productions()) {
    std::string key = p.lhs + " ->";
    for (const auto& s : p.rhs) key += " " + s;
    out[key] = p.prob;
  }
  return out;
}

void check_normalized(const Pcfg& g) {
  std::map<std::string, double> sums;
  for (const auto& p : g.productions()) sums[p.lhs] += p.prob;
  for (const auto& [lhs, sum] : sums)
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

}  // namespace

TEST_CASE("tag sequences build joined phrase-structure trees") {
  SECTION("the reference command") {
    const TreeNode t = tags_to_tree(reference_command());
    REQUIRE(t.bracketed() ==
            "(ROOT (O leg de) (F (S (h harten)) (V (5 vijf))) (O op de) "
            "(T (S (c klaveren)) (V (6 zes))))");
  }
  SECTION("adjacent O words form one chunk") {
    const TreeNode t = tags_to_tree(tagged({"ja", "hoor"}, {"O", "O"}));
    REQUIRE(t.bracketed() == "(ROOT (O ja hoor))");
  }
  SECTION("dealcard chunks") {
    const TreeNode t =
        tags_to_tree(tagged({"kaarten", "omdraaien"}, {"I_DC", "I_DC"}));
    REQUIRE(t.bracketed() == "(ROOT (DC kaarten omdraaien))");
  }
  SECTION("repeated slot tags join below the family node") {
    const TreeNode t =
        tags_to_tree(tagged({"harten", "kaart"}, {"I_FS=h", "I_FS=h"}));
    REQUIRE(t.bracketed() == "(ROOT (F (S (h harten kaart))))");
  }
  SECTION("column and foundation values get distinct symbols") {
    const TreeNode t =
        tags_to_tree(tagged({"derde", "opzij"}, {"I_TC=3", "I_TF=2"}));
    REQUIRE(t.bracketed() ==
            "(ROOT (T (C (col3 derde)) (FOUND (f2 opzij))))");
  }
}

TEST_CASE("tree reading is the exact inverse of tree building") {
  const TaggedUtterance ref = reference_command();
  REQUIRE(tree_to_tags(tags_to_tree(ref)) == ref);
  const TreeNode single = TreeNode::node(
      "ROOT", {TreeNode::node("O", {TreeNode::word("x")})});
  const TaggedUtterance got = tree_to_tags(single);
  REQUIRE(got.words == std::vector<std::string>{"x"});
  REQUIRE(got.tags == std::vector<ConceptTag>{ConceptTag::outside()});
}

TEST_CASE("malformed trees are rejected") {
  const TreeNode bad = TreeNode::node(
      "ROOT", {TreeNode::node("h", {TreeNode::word("harten")})});
  REQUIRE_THROWS_AS(tree_to_tags(bad), SchemaError);
  const TreeNode bare = TreeNode::node("ROOT", {TreeNode::word("x")});
  REQUIRE_THROWS_AS(tree_to_tags(bare), SchemaError);
  // target-hand does not exist
  const TreeNode th = TreeNode::node(
      "ROOT",
      {TreeNode::node(
          "T", {TreeNode::node("H", {TreeNode::node("hand",
                                                    {TreeNode::word("hand")})})})});
  REQUIRE_THROWS_AS(tree_to_tags(th), SchemaError);
}

TEST_CASE("round trip holds over generated corpora") {
  const Corpus corpus = generate_synthetic(default_synth_config(150, 41));
  for (const auto& u : corpus.utterances) {
    const TaggedUtterance tu{u.words, *u.gold_tags};
    REQUIRE(tree_to_tags(tags_to_tree(tu)) == tu);
  }
}

TEST_CASE("induction from the single reference tree") {
  const Pcfg g = Pcfg::induce({tags_to_tree(reference_command())});
  const auto probs = prob_table(g);
  const std::map<std::string, double> expected = {
      {"ROOT -> O F O T", 1.0}, {"F -> S V", 1.0},   {"T -> S V", 1.0},
      {"S -> h", 0.5},          {"S -> c", 0.5},     {"V -> 5", 0.5},
      {"V -> 6", 0.5},          {"O -> leg de", 0.5}, {"O -> op de", 0.5},
      {"h -> harten", 1.0},     {"c -> klaveren", 1.0}, {"5 -> vijf", 1.0},
      {"6 -> zes", 1.0}};
  REQUIRE(probs == expected);
  check_normalized(g);

  SECTION("duplicating every tree leaves probabilities unchanged") {
    const TreeNode t = tags_to_tree(reference_command());
    const Pcfg g2 = Pcfg::induce({t, t});
    REQUIRE(prob_table(g2) == expected);
  }
}

TEST_CASE("parsing the reference sentence recovers the tree") {
  const TreeNode tree = tags_to_tree(reference_command());
  const Pcfg g = Pcfg::induce({tree});
  const ParseResult res = g.viterbi_parse(
      {"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"});
  REQUIRE(res.ok());
  REQUIRE(*res.tree == tree);
  // Six rules of probability one half participate: two O expansions, two
  // suit choices and two value choices, so the derivation scores 0.5^6.
  REQUIRE_THAT(res.prob, Catch::Matchers::WithinRel(0.015625, 1e-12));
  REQUIRE(res.tree->bracketed().find("_B") == std::string::npos);

  const auto set =
      oracles::DerivationEnumerator(
          g, {"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"}, 200)
          .enumerate("ROOT");
  REQUIRE(!set.overflow);
  REQUIRE(set.scores.size() == 1);
  REQUIRE(set.scores[0] == res.log_prob);
}

TEST_CASE("words outside the lexicon cause a parse failure") {
  const Pcfg g = Pcfg::induce({tags_to_tree(reference_command())});
  REQUIRE(!g.viterbi_parse({"leg", "de", "ruiten", "vijf"}).ok());
  REQUIRE(!g.viterbi_parse({"volstrekt", "onbekend"}).ok());
}

TEST_CASE("merging grammars sums counts") {
  const Pcfg g = Pcfg::induce({tags_to_tree(reference_command())});
  SECTION("self-merge keeps probabilities") {
    const Pcfg m = Pcfg::merge({g, g});
    REQUIRE(prob_table(m) == prob_table(g));
    REQUIRE(m.total_count("ROOT") == 2);
    check_normalized(m);
  }
  SECTION("disjoint merge unions the productions") {
    const Pcfg d =
        Pcfg::induce({tags_to_tree(tagged({"omdraaien"}, {"I_DC"}))});
    const Pcfg m = Pcfg::merge({g, d});
    const auto probs = prob_table(m);
    REQUIRE_THAT(probs.at("ROOT -> O F O T"),
                 Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE_THAT(probs.at("ROOT -> DC"),
                 Catch::Matchers::WithinAbs(0.5, 1e-15));
    REQUIRE(probs.count("DC -> omdraaien") == 1);
    check_normalized(m);
  }
  SECTION("merged coverage includes every input's coverage") {
    const Pcfg d =
        Pcfg::induce({tags_to_tree(tagged({"omdraaien"}, {"I_DC"}))});
    const Pcfg m = Pcfg::merge({g, d});
    REQUIRE(m.viterbi_parse({"omdraaien"}).ok());
    REQUIRE(m.viterbi_parse(
                 {"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"})
                .ok());
  }
}

TEST_CASE("production filtering") {
  // 9 identical movecard trees plus one dealcard tree: the dealcard root
  // rule sits at relative frequency 0.1.
  std::vector<TreeNode> trees;
  for (int i = 0; i < 9; ++i) trees.push_back(tags_to_tree(reference_command()));
  trees.push_back(tags_to_tree(tagged({"omdraaien"}, {"I_DC"})));
  const Pcfg g = Pcfg::induce(trees);

  SECTION("zero threshold is the identity") {
    REQUIRE(prob_table(g.filter_productions(0.0)) == prob_table(g));
  }
  SECTION("filtering drops rare rules and renormalizes") {
    const Pcfg f = g.filter_productions(0.2);
    const auto probs = prob_table(f);
    REQUIRE(probs.count("ROOT -> DC") == 0);
    REQUIRE_THAT(probs.at("ROOT -> O F O T"),
                 Catch::Matchers::WithinAbs(1.0, 1e-15));
    check_normalized(f);
  }
  SECTION("single-production groups survive any threshold below one") {
    // every left-hand side here has exactly one rule
    const Pcfg one =
        Pcfg::induce({tags_to_tree(tagged({"omdraaien"}, {"I_DC"}))});
    const Pcfg f = one.filter_productions(0.99);
    REQUIRE(prob_table(f) == prob_table(one));
  }
  SECTION("emptying a left-hand side is an error that names it") {
    // two trees with four distinct suits: every S rule sits at 0.25
    const Pcfg suits = Pcfg::induce(
        {tags_to_tree(reference_command()),
         tags_to_tree(tagged(
             {"leg", "de", "ruiten", "vijf", "op", "de", "schoppen", "zes"},
             {"O", "O", "I_FS=d", "I_FV=5", "O", "O", "I_TS=s", "I_TV=6"}))});
    try {
      suits.filter_productions(0.3);
      FAIL("expected an error");
    } catch (const DataError& e) {
      REQUIRE(std::string(e.what()).find(" S") != std::string::npos);
    }
  }
  SECTION("threshold domain is checked") {
    REQUIRE_THROWS_AS(g.filter_productions(1.0), DataError);
    REQUIRE_THROWS_AS(g.filter_productions(-0.1), DataError);
  }
}

TEST_CASE("serialized grammar matches the golden fixture byte for byte") {
  const Pcfg g = Pcfg::induce({tags_to_tree(reference_command())});
  const std::string expected =
      "slotgram-pcfg 1\n"
      "ROOT -> O F O T [1] 1\n"
      "F -> S V [1] 1\n"
      "T -> S V [1] 1\n"
      "S -> c [0.5] 1\n"
      "S -> h [0.5] 1\n"
      "V -> 5 [0.5] 1\n"
      "V -> 6 [0.5] 1\n"
      "O -> leg de [0.5] 1\n"
      "O -> op de [0.5] 1\n"
      "---\n"
      "5 -> vijf [1] 1\n"
      "6 -> zes [1] 1\n"
      "c -> klaveren [1] 1\n"
      "h -> harten [1] 1\n";
  REQUIRE(g.serialize() == expected);

  const auto path = (oracles::test_tmp_dir() / "grammar.pcfg").string();
  g.save(path);
  const Pcfg back = Pcfg::load(path);
  REQUIRE(back == g);
  REQUIRE(back.serialize() == expected);
}

TEST_CASE("probabilities are exact count ratios at corpus scale") {
  // 586486 occurrences per million: the stored probability is the exact
  // ratio, off from the decimal only by double representation error.
  std::istringstream in(
      "slotgram-pcfg 1\n"
      "ROOT -> F O T [0] 586486\n"
      "ROOT -> O DC [0] 331081\n"
      "ROOT -> DC [0] 82433\n"
      "DC -> omdraaien [0] 1\n"
      "F -> S V [0] 1\n"
      "T -> S V [0] 1\n"
      "S -> h [0] 1\n"
      "V -> 5 [0] 1\n"
      "O -> op [0] 1\n"
      "---\n"
      "h -> harten [0] 1\n"
      "5 -> vijf [0] 1\n");
  const Pcfg g = Pcfg::parse_text(in, "inline");
  const auto probs = prob_table(g);
  REQUIRE_THAT(probs.at("ROOT -> F O T"),
               Catch::Matchers::WithinAbs(0.586486, 1e-15));
  REQUIRE(probs.at("ROOT -> F O T") == 586486.0 / 1000000.0);
}

TEST_CASE("pretty form uses display probabilities") {
  const Pcfg g = Pcfg::induce({tags_to_tree(reference_command())});
  const std::string text = g.pretty(0.005);
  REQUIRE(text.find("ROOT -> O F O T [1.0]\n") != std::string::npos);
  REQUIRE(text.find("S -> c [0.5]\n") != std::string::npos);
  REQUIRE(text.find("] 1\n") == std::string::npos);  // no counts in display
}

TEST_CASE("parser matches exhaustive enumeration on random instances") {
  Rng rng(7);
  const std::vector<std::string> vocab = {"rood", "groen", "blauw", "geel"};
  const std::vector<std::string> tag_pool = {
      "O", "I_DC", "I_FS=h", "I_FS=s", "I_FV=2", "I_TS=h", "I_TV=2", "I_TV=3"};
  int checked = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const int n_trees = 2 + static_cast<int>(rng.index(4));
    std::vector<TreeNode> trees;
    for (int i = 0; i < n_trees; ++i) {
      const int len = 1 + static_cast<int>(rng.index(6));
      TaggedUtterance tu;
      for (int t = 0; t < len; ++t) {
        tu.words.push_back(rng.pick(vocab));
        tu.tags.push_back(ConceptTag::parse(rng.pick(tag_pool)));
      }
      trees.push_back(tags_to_tree(tu));
    }
    const Pcfg g = Pcfg::induce(trees);
    check_normalized(g);

    const int len = 1 + static_cast<int>(rng.index(6));
    std::vector<std::string> words;
    for (int t = 0; t < len; ++t) words.push_back(rng.pick(vocab));

    auto set = oracles::DerivationEnumerator(g, words, 200).enumerate("ROOT");
    if (set.overflow) continue;
    const ParseResult res = g.viterbi_parse(words);
    REQUIRE(res.ok() == !set.scores.empty());
    if (res.ok()) {
      double best = set.scores[0];
      for (double s : set.scores) best = std::max(best, s);
      REQUIRE(res.log_prob == best);
      REQUIRE(res.tree->leaves() == words);
      ++checked;
    }
  }
  REQUIRE(checked > 20);
}

TEST_CASE("grammars induced from generated corpora stay normalized") {
  const Corpus corpus = generate_synthetic(default_synth_config(100, 51));
  std::vector<TreeNode> trees;
  for (const auto& u : corpus.utterances)
    trees.push_back(tags_to_tree({u.words, *u.gold_tags}));
  const Pcfg g = Pcfg::induce(trees);
  check_normalized(g);
  check_normalized(Pcfg::merge({g, g}));
  check_normalized(g.filter_productions(0.001));
}
