#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slotgram/corpus.hpp"
#include "slotgram/framing.hpp"
#include "slotgram/harness.hpp"
#include "slotgram/pcfg.hpp"
#include "slotgram/synth.hpp"
#include "slotgram/taglab.hpp"
#include "slotgram/weak_decoder.hpp"

namespace {

using namespace slotgram;

void print_report(const SlotReport& r) {
  std::printf("correct %lld predicted %lld reference %lld\n", r.correct,
              r.predicted_filled, r.reference_filled);
  std::printf("precision %.6f recall %.6f f1 %.6f\n", r.precision, r.recall,
              r.f1);
}

Corpus frames_as_corpus(const Corpus& base,
                        const std::vector<SemanticFrame>& frames) {
  Corpus out;
  out.schema = base.schema;
  for (std::size_t i = 0; i < base.utterances.size(); ++i) {
    Utterance u;
    u.id = base.utterances[i].id;
    u.order_index = base.utterances[i].order_index;
    u.words = base.utterances[i].words;
    u.frame = frames[i];
    out.utterances.push_back(std::move(u));
  }
  return out;
}

std::vector<SemanticFrame> reference_frames(const Corpus& corpus, bool prune) {
  std::vector<SemanticFrame> refs;
  for (const auto& u : corpus.utterances)
    refs.push_back(prune ? prune_reference(u) : u.frame);
  return refs;
}

struct WeakPipeline {
  WeakHmm model;
  Corpus train;
};

WeakPipeline train_weak_pipeline(const std::string& corpus_path,
                                 std::size_t size, std::uint64_t seed,
                                 int iters, double tol, double theta) {
  Corpus corpus = load_corpus(corpus_path);
  Corpus train = size == 0 ? corpus : prefix(corpus, size);
  if (train.utterances.empty()) throw DataError("training corpus is empty");
  WeakHmm model = WeakHmm::init(train.schema, corpus_vocabulary(train), seed);
  model.set_threshold(theta);
  model.train_em(train, iters, tol);
  return {std::move(model), std::move(train)};
}

std::vector<TaggedUtterance> self_label(const WeakHmm& model,
                                        const Corpus& train) {
  std::vector<TaggedUtterance> out;
  for (const auto& u : train.utterances)
    out.push_back(model.viterbi_decode(u.words, model.allowed_states(u)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slotgram: weakly supervised semantic frame slot filling"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  std::string gen_config, gen_out, gen_preset, gen_dump;
  std::size_t gen_size = 0;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "synthetic-config file");
  gen->add_option("--preset", gen_preset, "builtin config: default or drift");
  gen->add_option("--size", gen_size, "override utterance count");
  gen->add_option("--seed", gen_seed, "override generator seed");
  gen->add_option("--out", gen_out, "corpus output path");
  gen->add_option("--dump-config", gen_dump, "write the effective config here");
  gen->callback([&] {
    SynthConfig cfg;
    if (!gen_config.empty()) {
      cfg = load_synth_config(gen_config);
    } else if (gen_preset == "default") {
      cfg = default_synth_config();
    } else if (gen_preset == "drift") {
      cfg = drift_synth_config();
    } else {
      throw CLI::ValidationError("gen", "need --config or --preset default|drift");
    }
    if (gen_size) cfg.size = gen_size;
    if (gen_seed) cfg.seed = *gen_seed;
    if (!gen_dump.empty()) save_synth_config(cfg, gen_dump);
    if (!gen_out.empty()) {
      save_corpus(generate_synthetic(cfg), gen_out);
      std::printf("wrote %zu utterances to %s\n", cfg.size, gen_out.c_str());
    } else if (gen_dump.empty()) {
      throw CLI::ValidationError("gen", "need --out or --dump-config");
    }
  });

  // train-weak
  auto* tw = app.add_subcommand("train-weak", "EM-train the weak decoder");
  std::string tw_corpus, tw_out;
  std::size_t tw_size = 0;
  std::uint64_t tw_seed = 0;
  int tw_iters = 30;
  double tw_tol = 1e-5, tw_theta = 0.5;
  tw->add_option("--corpus", tw_corpus, "training corpus")->required();
  tw->add_option("--size", tw_size, "train on the first N utterances only");
  tw->add_option("--seed", tw_seed, "random initialization seed");
  tw->add_option("--iters", tw_iters, "max EM iterations");
  tw->add_option("--tol", tw_tol, "relative log-likelihood tolerance");
  tw->add_option("--theta", tw_theta, "slot-filling threshold");
  tw->add_option("--out", tw_out, "model output path")->required();
  tw->callback([&] {
    auto pipe = train_weak_pipeline(tw_corpus, tw_size, tw_seed, tw_iters,
                                    tw_tol, tw_theta);
    pipe.model.save(tw_out);
    std::printf("trained on %zu utterances, model written to %s\n",
                pipe.train.utterances.size(), tw_out.c_str());
  });

  // decode
  auto* dec = app.add_subcommand("decode", "Viterbi-decode a corpus");
  std::string dec_model, dec_corpus, dec_tags, dec_frames;
  bool dec_masked = false;
  dec->add_option("--model", dec_model, "weak decoder model")->required();
  dec->add_option("--corpus", dec_corpus, "corpus to decode")->required();
  dec->add_flag("--masked", dec_masked,
                "restrict paths to each utterance's frame states");
  dec->add_option("--tags", dec_tags, "tagged-utterance output (token TAB tag)");
  dec->add_option("--frames", dec_frames,
                  "predicted-frame corpus output (posterior frame filling)");
  dec->callback([&] {
    const WeakHmm model = WeakHmm::load(dec_model);
    const Corpus corpus = load_corpus(dec_corpus);
    std::vector<TaggedUtterance> tagged;
    for (const auto& u : corpus.utterances) {
      if (dec_masked)
        tagged.push_back(model.viterbi_decode(u.words, model.allowed_states(u)));
      else
        tagged.push_back(model.viterbi_decode(u.words));
    }
    if (!dec_tags.empty()) write_tagged_file(tagged, dec_tags);
    if (!dec_frames.empty()) {
      std::vector<SemanticFrame> frames;
      for (const auto& u : corpus.utterances)
        frames.push_back(model.fill_frame_weak(u.words));
      save_corpus(frames_as_corpus(corpus, frames), dec_frames);
    }
    if (dec_tags.empty() && dec_frames.empty())
      std::fputs(format_tagged(tagged).c_str(), stdout);
  });

  // retrain-seq
  auto* rs = app.add_subcommand(
      "retrain-seq", "retrain a two-step sequence labeler on weak output");
  std::string rs_corpus, rs_eval, rs_out, rs_preset = "crf-like";
  std::size_t rs_size = 0;
  std::uint64_t rs_seed = 0;
  int rs_iters = 30;
  double rs_tol = 1e-5, rs_theta = 0.5;
  rs->add_option("--corpus", rs_corpus, "training corpus")->required();
  rs->add_option("--eval", rs_eval, "evaluation corpus")->required();
  rs->add_option("--size", rs_size, "train on the first N utterances only");
  rs->add_option("--seed", rs_seed, "random seed");
  rs->add_option("--preset", rs_preset, "labeler preset: mbt-like or crf-like");
  rs->add_option("--iters", rs_iters, "max EM iterations");
  rs->add_option("--tol", rs_tol, "relative log-likelihood tolerance");
  rs->add_option("--theta", rs_theta, "weak decoder threshold");
  rs->add_option("--out", rs_out, "artifact output directory");
  rs->callback([&] {
    auto pipe = train_weak_pipeline(rs_corpus, rs_size, rs_seed, rs_iters,
                                    rs_tol, rs_theta);
    const auto labels = self_label(pipe.model, pipe.train);
    const TwoStepModel model =
        train_two_step(labels, preset_by_name(rs_preset), rs_seed);
    const Corpus eval = load_corpus(rs_eval);
    std::vector<TaggedUtterance> tagged;
    std::vector<SemanticFrame> frames;
    for (const auto& u : eval.utterances) {
      tagged.push_back(tag_two_step(model, u.words));
      frames.push_back(tags_to_frame(eval.schema, tagged.back()));
    }
    print_report(score_frames(frames, reference_frames(eval, true)));
    if (!rs_out.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(rs_out, ec);
      if (ec) throw IoError("cannot create " + rs_out);
      write_tagged_file(labels, rs_out + "/self_labels.tsv");
      save_two_step(model, rs_out + "/labeler.model");
      write_tagged_file(tagged, rs_out + "/eval_tagged.tsv");
      save_corpus(frames_as_corpus(eval, frames), rs_out + "/pred_frames.jsonl");
    }
  });

  // retrain-pcfg
  auto* rp = app.add_subcommand("retrain-pcfg",
                                "induce a grammar from weak output and parse");
  std::string rp_corpus, rp_eval, rp_out;
  std::size_t rp_size = 0;
  std::uint64_t rp_seed = 0;
  int rp_iters = 30;
  double rp_tol = 1e-5, rp_theta = 0.5;
  rp->add_option("--corpus", rp_corpus, "training corpus")->required();
  rp->add_option("--eval", rp_eval, "evaluation corpus")->required();
  rp->add_option("--size", rp_size, "train on the first N utterances only");
  rp->add_option("--seed", rp_seed, "random seed");
  rp->add_option("--iters", rp_iters, "max EM iterations");
  rp->add_option("--tol", rp_tol, "relative log-likelihood tolerance");
  rp->add_option("--theta", rp_theta, "weak decoder threshold");
  rp->add_option("--out", rp_out, "artifact output directory");
  rp->callback([&] {
    auto pipe = train_weak_pipeline(rp_corpus, rp_size, rp_seed, rp_iters,
                                    rp_tol, rp_theta);
    const auto labels = self_label(pipe.model, pipe.train);
    std::vector<TreeNode> trees;
    for (const auto& t : labels) trees.push_back(tags_to_tree(t));
    const Pcfg grammar = Pcfg::induce(trees);
    const Corpus eval = load_corpus(rp_eval);
    std::vector<SemanticFrame> frames;
    std::size_t parsed = 0;
    for (const auto& u : eval.utterances) {
      const ParseResult res = grammar.viterbi_parse(u.words);
      if (res.ok()) {
        ++parsed;
        frames.push_back(tags_to_frame(eval.schema, tree_to_tags(*res.tree)));
      } else {
        frames.push_back(SemanticFrame::movecard());
      }
    }
    std::printf("parsed %zu/%zu evaluation utterances\n", parsed,
                eval.utterances.size());
    print_report(score_frames(frames, reference_frames(eval, true)));
    if (!rp_out.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(rp_out, ec);
      if (ec) throw IoError("cannot create " + rp_out);
      grammar.save(rp_out + "/grammar.pcfg");
      std::ofstream pretty(rp_out + "/grammar_pretty.txt");
      pretty << grammar.pretty(0.005);
      save_corpus(frames_as_corpus(eval, frames), rp_out + "/pred_frames.jsonl");
    }
  });

  // eval
  auto* ev = app.add_subcommand("eval", "score predicted frames");
  std::string ev_pred, ev_ref;
  bool ev_no_prune = false, ev_no_dc = false;
  ev->add_option("--pred", ev_pred, "predicted-frame corpus")->required();
  ev->add_option("--ref", ev_ref, "reference corpus")->required();
  ev->add_flag("--no-prune", ev_no_prune,
               "score against reference frames as stored");
  ev->add_flag("--no-dealcard-slot", ev_no_dc,
               "drop the synthetic dealcard frame-type slot unit");
  ev->callback([&] {
    const Corpus pred = load_corpus(ev_pred);
    const Corpus ref = load_corpus(ev_ref);
    std::vector<SemanticFrame> pf;
    for (const auto& u : pred.utterances) pf.push_back(u.frame);
    print_report(
        score_frames(pf, reference_frames(ref, !ev_no_prune), !ev_no_dc));
  });

  // curve
  auto* cv = app.add_subcommand("curve", "run learning-curve experiments");
  std::string cv_config, cv_out;
  cv->add_option("--config", cv_config, "experiment config file")->required();
  cv->add_option("--out", cv_out, "override the output directory");
  cv->callback([&] {
    ExperimentConfig cfg = load_experiment_config(cv_config);
    if (!cv_out.empty()) cfg.out_dir = cv_out;
    Corpus corpus = cfg.load_source();
    if (cfg.theta_sweep) {
      if (!cfg.dev_path)
        throw DataError("theta_sweep needs dev_path in the config");
      const Corpus dev = load_corpus(*cfg.dev_path);
      cfg.theta = calibrate_threshold(cfg, corpus, dev);
      std::printf("calibrated theta %g\n", cfg.theta);
    }
    CurveRunner runner(cfg, std::move(corpus));
    const CurveReport report = runner.run_learning_curve();
    export_report(report, runner.grammars(), runner.merged_grammars(),
                  cfg.out_dir);
    for (const auto& row : report.rows)
      std::printf("%-24s size %4zu  mean_f1 %.4f  [%.4f, %.4f]\n",
                  row.condition.c_str(), row.train_size, row.point.mean_f1,
                  row.point.ci95_low, row.point.ci95_high);
    std::printf("report written to %s\n", cfg.out_dir.c_str());
  });

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "grid-search the threshold");
  std::string cal_config, cal_dev;
  cal->add_option("--config", cal_config, "experiment config file")->required();
  cal->add_option("--dev", cal_dev, "dev corpus (overrides config dev_path)");
  cal->callback([&] {
    ExperimentConfig cfg = load_experiment_config(cal_config);
    if (!cal_dev.empty()) cfg.dev_path = cal_dev;
    if (!cfg.dev_path) throw DataError("calibrate needs a dev corpus");
    const Corpus corpus = cfg.load_source();
    const Corpus dev = load_corpus(*cfg.dev_path);
    const double theta = calibrate_threshold(cfg, corpus, dev);
    std::printf("theta %g\n", theta);
  });

  // import-tsv
  auto* imp = app.add_subcommand(
      "import-tsv", "convert tab-separated external data to the corpus format");
  std::string imp_in, imp_out;
  imp->add_option("--input", imp_in, "TSV input (id, words, type, slots)")
      ->required();
  imp->add_option("--out", imp_out, "corpus output path")->required();
  imp->callback([&] {
    const Corpus corpus = import_tsv(imp_in);
    save_corpus(corpus, imp_out);
    std::printf("imported %zu utterances to %s\n", corpus.utterances.size(),
                imp_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const slotgram::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
