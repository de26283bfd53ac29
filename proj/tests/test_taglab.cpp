#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "slotgram/corpus.hpp"
#include "slotgram/synth.hpp"
#include "slotgram/taglab.hpp"

using namespace slotgram;

namespace {

// Every valid concept tag: O, the dealcard markers, and both IOB positions
// for every slot/value pair.
std::vector<ConceptTag> full_tag_inventory() {
  std::vector<ConceptTag> tags{ConceptTag::outside(),
                               ConceptTag::dealcard(TagPos::Inside),
                               ConceptTag::dealcard(TagPos::Begin)};
  const auto& schema = FrameSchema::patience();
  for (const auto& slot : movecard_slots())
    for (const auto& v : schema.domain(slot)) {
      tags.push_back(ConceptTag::of(TagPos::Inside, slot, v));
      tags.push_back(ConceptTag::of(TagPos::Begin, slot, v));
    }
  return tags;
}

TaggedUtterance tagged(std::vector<std::string> words,
                       std::vector<std::string> tag_strings) {
  TaggedUtterance u;
  u.words = std::move(words);
  for (const auto& t : tag_strings) u.tags.push_back(ConceptTag::parse(t));
  return u;
}

std::string value_word(int v) {
  static const std::vector<std::string> words = {
      "aas", "twee", "drie", "vier", "vijf", "zes", "zeven",
      "acht", "negen", "tien", "boer", "dame", "koning"};
  return words[static_cast<std::size_t>(v - 1)];
}

// Training data where value 13 is verbalized only inside from-chunks.
std::vector<TaggedUtterance> from_only_king_corpus() {
  const std::vector<std::string> suits = {"harten", "klaveren", "ruiten",
                                          "schoppen"};
  const std::vector<std::string> suit_codes = {"h", "c", "d", "s"};
  std::vector<TaggedUtterance> data;
  for (int v = 2; v <= 10; ++v) {
    for (std::size_t si = 0; si < suits.size(); ++si) {
      const std::size_t sj = (si + 1) % suits.size();
      const int v2 = v == 10 ? 2 : v + 1;
      data.push_back(tagged(
          {"leg", "de", suits[si], value_word(v), "op", "de", suits[sj],
           value_word(v2)},
          {"O", "O", "I_FS=" + suit_codes[si], "I_FV=" + std::to_string(v), "O",
           "O", "I_TS=" + suit_codes[sj], "I_TV=" + std::to_string(v2)}));
    }
  }
  for (std::size_t si = 0; si < suits.size(); ++si) {
    const std::size_t sj = (si + 1) % suits.size();
    const auto king = tagged(
        {"leg", "de", suits[si], "koning", "op", "de", suits[sj], "vijf"},
        {"O", "O", "I_FS=" + suit_codes[si], "I_FV=13", "O", "O",
         "I_TS=" + suit_codes[sj], "I_TV=5"});
    data.push_back(king);
    data.push_back(king);
  }
  return data;
}

}  // namespace

TEST_CASE("tag decomposition drops the facet and keeps it as remainder") {
  auto d = [](const std::string& t) {
    return decompose_tag(ConceptTag::parse(t));
  };
  REQUIRE(d("I_FS=h") == std::pair<std::string, std::string>{"I_S=h", "F"});
  REQUIRE(d("I_TV=6") == std::pair<std::string, std::string>{"I_V=6", "T"});
  REQUIRE(d("I_FC=3") == std::pair<std::string, std::string>{"I_C=3", "F"});
  REQUIRE(d("I_FH=hand") == std::pair<std::string, std::string>{"I_H=hand", "F"});
  REQUIRE(d("I_FF=2") == std::pair<std::string, std::string>{"I_FOUND=2", "F"});
  REQUIRE(d("O") == std::pair<std::string, std::string>{"O", "O"});
  REQUIRE(d("I_DC") == std::pair<std::string, std::string>{"I_DC", "O"});
  REQUIRE(d("B_TS=s") == std::pair<std::string, std::string>{"B_S=s", "T"});
}

TEST_CASE("tag composition inverts compatible pairs and defaults to O") {
  REQUIRE(compose_tags("I_S=h", "T") == ConceptTag::parse("I_TS=h"));
  REQUIRE(compose_tags("I_V=6", "F") == ConceptTag::parse("I_FV=6"));
  REQUIRE(compose_tags("I_DC", "O") == ConceptTag::dealcard());
  REQUIRE(compose_tags("O", "F") == ConceptTag::outside());
  REQUIRE(compose_tags("O", "O") == ConceptTag::outside());
  REQUIRE(compose_tags("I_S=h", "O") == ConceptTag::outside());
  REQUIRE(compose_tags("I_DC", "F") == ConceptTag::outside());
  // There is no target-hand slot, so this pair is incompatible.
  REQUIRE(compose_tags("I_H=hand", "T") == ConceptTag::outside());
  REQUIRE(compose_tags("garbage", "F") == ConceptTag::outside());
}

TEST_CASE("decompose/compose is the identity over the whole tag inventory") {
  for (const auto& tag : full_tag_inventory()) {
    const auto [gen, rem] = decompose_tag(tag);
    REQUIRE(compose_tags(gen, rem) == tag);
  }
}

TEST_CASE("labeler memorizes separable data and is deterministic") {
  std::vector<SeqExample> data;
  data.push_back({{"rood", "blauw"}, {"A", "B"}, {}});
  data.push_back({{"groen", "geel"}, {"C", "A"}, {}});
  const LinearChainModel m1 =
      train_labeler(data, FeatureTemplates{}, 10, true, 7);
  REQUIRE(m1.tag({"rood", "blauw"}) == std::vector<std::string>{"A", "B"});
  REQUIRE(m1.tag({"groen", "geel"}) == std::vector<std::string>{"C", "A"});
  const LinearChainModel m2 =
      train_labeler(data, FeatureTemplates{}, 10, true, 7);
  REQUIRE(m1.to_text() == m2.to_text());
}

TEST_CASE("labeler training rejects empty data") {
  REQUIRE_THROWS_AS(train_labeler({}, FeatureTemplates{}, 1, false, 0),
                    DataError);
}

TEST_CASE("gold-trained labeler reaches high token accuracy on held-out data") {
  const Corpus corpus = generate_synthetic(default_synth_config(250, 23));
  std::vector<SeqExample> train;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& u = corpus.utterances[i];
    SeqExample e;
    e.tokens = u.words;
    for (const auto& t : *u.gold_tags) e.labels.push_back(t.str());
    train.push_back(std::move(e));
  }
  const LinearChainModel model = train_labeler(
      train, FeatureTemplates{}, kCrfLike.epochs, kCrfLike.averaged, 0);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 200; i < 250; ++i) {
    const auto& u = corpus.utterances[i];
    const auto got = model.tag(u.words);
    for (std::size_t t = 0; t < got.size(); ++t) {
      ++total;
      if (got[t] == (*u.gold_tags)[t].str()) ++correct;
    }
  }
  REQUIRE(static_cast<double>(correct) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("an O-majority model tags unknown words O") {
  std::vector<SeqExample> data;
  data.push_back({{"een", "twee", "drie"}, {"O", "O", "O"}, {}});
  data.push_back({{"vier", "vijf"}, {"O", "X"}, {}});
  data.push_back({{"zes", "zeven"}, {"O", "O"}, {}});
  const LinearChainModel model =
      train_labeler(data, FeatureTemplates{}, 5, true, 1);
  const auto got = model.tag({"nooit", "gezien", "woorden"});
  for (const auto& t : got) REQUIRE(t == "O");
}

TEST_CASE("an absent aux layer behaves like no aux layer") {
  std::vector<SeqExample> data;
  data.push_back({{"a", "b"}, {"X", "Y"}, {}});
  const LinearChainModel model =
      train_labeler(data, FeatureTemplates{}, 3, false, 2);
  const std::vector<std::string> empty_aux;
  REQUIRE(model.tag({"a", "b"}) == model.tag({"a", "b"}, &empty_aux));
}

TEST_CASE("two-step decomposition of the reference command") {
  const TaggedUtterance u = tagged(
      {"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"},
      {"O", "O", "I_FS=h", "I_FV=5", "O", "O", "I_TS=c", "I_TV=6"});
  std::vector<std::string> portions, remainders;
  for (const auto& t : u.tags) {
    auto [gen, rem] = decompose_tag(t);
    portions.push_back(gen);
    remainders.push_back(rem);
  }
  REQUIRE(portions == std::vector<std::string>{"O", "O", "I_S=h", "I_V=5", "O",
                                               "O", "I_S=c", "I_V=6"});
  REQUIRE(remainders ==
          std::vector<std::string>{"O", "O", "F", "F", "O", "O", "T", "T"});
}

TEST_CASE("two-step model trains on a single utterance") {
  std::vector<TaggedUtterance> data{tagged({"leg", "harten"}, {"O", "I_FS=h"})};
  const TwoStepModel m = train_two_step(data, kCrfLike, 0);
  const TaggedUtterance out = tag_two_step(m, {"leg", "harten"});
  REQUIRE(out.tags[0].is_outside());
  REQUIRE(out.tags[1] == ConceptTag::parse("I_FS=h"));
}

TEST_CASE("two-step tagging reproduces the reference command's tags") {
  const auto data = from_only_king_corpus();
  const TwoStepModel model = train_two_step(data, kCrfLike, 0);
  const TaggedUtterance out = tag_two_step(
      model, {"leg", "de", "harten", "vijf", "op", "de", "klaveren", "zes"});
  std::vector<std::string> tags;
  for (const auto& t : out.tags) tags.push_back(t.str());
  REQUIRE(tags == std::vector<std::string>{"O", "O", "I_FS=h", "I_FV=5", "O",
                                           "O", "I_TS=c", "I_TV=6"});
}

TEST_CASE("expression sharing: the two-step tagger reaches unseen facet tags") {
  const auto data = from_only_king_corpus();

  // Single step: the conglomerate tag I_TV=13 never occurs in training, so
  // that tagger cannot produce it.
  std::vector<SeqExample> flat;
  for (const auto& u : data) {
    SeqExample e;
    e.tokens = u.words;
    for (const auto& t : u.tags) e.labels.push_back(t.str());
    flat.push_back(std::move(e));
  }
  const LinearChainModel single = train_labeler(
      flat, FeatureTemplates{}, kCrfLike.epochs, kCrfLike.averaged, 0);
  bool has_tv13 = false;
  for (const auto& t : single.tags())
    if (t == "I_TV=13") has_tv13 = true;
  REQUIRE(!has_tv13);

  const TwoStepModel two = train_two_step(data, kCrfLike, 0);
  for (const std::string suit : {"harten", "klaveren", "ruiten", "schoppen"}) {
    const std::vector<std::string> eval_words = {"leg", "de", "schoppen",
                                                 "twee", "op", "de", suit,
                                                 "koning"};
    REQUIRE(single.tag(eval_words).back() != "I_TV=13");
    const TaggedUtterance out = tag_two_step(two, eval_words);
    REQUIRE(out.tags.back() == ConceptTag::parse("I_TV=13"));
  }
}

TEST_CASE("two-step output stays within the valid tag inventory") {
  const Corpus corpus = generate_synthetic(default_synth_config(120, 31));
  std::vector<TaggedUtterance> data;
  for (const auto& u : corpus.utterances) data.push_back({u.words, *u.gold_tags});
  const TwoStepModel model = train_two_step(data, kMbtLike, 1);
  for (const auto& u : corpus.utterances) {
    const TaggedUtterance out = tag_two_step(model, u.words);
    for (const auto& t : out.tags) {
      if (t.has_slot_value()) {
        REQUIRE(is_movecard_slot(t.slot));
        REQUIRE(FrameSchema::patience().value_in_domain(t.slot, t.value));
      }
    }
  }
}

TEST_CASE("labeler and two-step models round-trip through files") {
  std::vector<TaggedUtterance> data{
      tagged({"leg", "harten", "vijf"}, {"O", "I_FS=h", "I_FV=5"}),
      tagged({"op", "klaveren", "zes"}, {"O", "I_TS=c", "I_TV=6"})};
  const TwoStepModel m = train_two_step(data, kCrfLike, 5);
  const auto dir = std::filesystem::temp_directory_path() / "slotgram_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "two_step.model").string();
  save_two_step(m, path);
  const TwoStepModel back = load_two_step(path);
  REQUIRE(back.step1.to_text() == m.step1.to_text());
  REQUIRE(back.step2.to_text() == m.step2.to_text());
  REQUIRE(tag_two_step(back, data[0].words) == tag_two_step(m, data[0].words));
}

TEST_CASE("tagged-utterance exchange format round trips") {
  std::vector<TaggedUtterance> seqs{
      tagged({"leg", "harten"}, {"O", "I_FS=h"}),
      tagged({"kaarten", "omdraaien"}, {"I_DC", "I_DC"})};
  const auto dir = std::filesystem::temp_directory_path() / "slotgram_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "tagged.tsv").string();
  write_tagged_file(seqs, path);
  REQUIRE(read_tagged_file(path) == seqs);
}
