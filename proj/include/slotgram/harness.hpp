#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slotgram/corpus.hpp"
#include "slotgram/framing.hpp"
#include "slotgram/pcfg.hpp"
#include "slotgram/synth.hpp"
#include "slotgram/taglab.hpp"
#include "slotgram/weak_decoder.hpp"

namespace slotgram {

inline const std::vector<std::string>& known_conditions() {
  static const std::vector<std::string> c = {"supervised", "weak", "retrain-seq",
                                             "retrain-pcfg"};
  return c;
}

struct ExperimentConfig {
  // Corpus source: exactly one of these.
  std::optional<std::string> corpus_path;
  std::optional<SynthConfig> synth;

  std::size_t chunk = 50;
  std::int64_t eval_num = 1;
  std::int64_t eval_den = 3;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::string> conditions = known_conditions();
  std::map<std::string, std::string> labeler_presets;  // condition -> preset name
  std::string pcfg_merge = "both";  // single-run | all-runs | both
  double theta = 0.5;
  bool theta_sweep = false;
  double sweep_lo = 0.0, sweep_hi = 1.0, sweep_step = 0.05;
  std::optional<std::string> dev_path;
  int em_max_iter = 30;
  double em_rel_tol = 1e-5;
  std::string out_dir = "out";

  LabelerPreset preset_for(const std::string& condition) const {
    auto it = labeler_presets.find(condition);
    return it == labeler_presets.end() ? kCrfLike : preset_by_name(it->second);
  }

  void validate() const {
    if (!corpus_path.has_value() && !synth.has_value())
      throw DataError("experiment config needs a corpus source");
    if (seeds.empty()) throw DataError("experiment config needs at least one seed");
    if (conditions.empty()) throw DataError("experiment config needs conditions");
    for (const auto& c : conditions) {
      const auto& known = known_conditions();
      if (std::find(known.begin(), known.end(), c) == known.end())
        throw DataError("unknown condition: " + c);
    }
    if (pcfg_merge != "single-run" && pcfg_merge != "all-runs" &&
        pcfg_merge != "both")
      throw DataError("pcfg_merge must be single-run, all-runs or both");
  }

  Corpus load_source() const {
    validate();
    if (corpus_path) return load_corpus(*corpus_path);
    return generate_synthetic(*synth);
  }
};

inline constexpr const char* kExperimentFormat = "slotgram-experiment";
inline constexpr int kExperimentVersion = 1;

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.at("format") != kExperimentFormat)
      throw ParseError(path + ": not an experiment config file");
    if (j.at("version").get<int>() != kExperimentVersion)
      throw ParseError(path + ": unsupported config version");
    if (j.contains("corpus_path"))
      cfg.corpus_path = j.at("corpus_path").get<std::string>();
    if (j.contains("synth_path"))
      cfg.synth = load_synth_config(j.at("synth_path").get<std::string>());
    if (j.contains("synth"))
      cfg.synth = synth_config_from_json(j.at("synth"), path);
    if (j.contains("synth_preset")) {
      const std::string preset = j.at("synth_preset").get<std::string>();
      const auto size = j.value("synth_size", std::size_t{1142});
      const auto seed = j.value("synth_seed", std::uint64_t{0});
      if (preset == "default") cfg.synth = default_synth_config(size, seed);
      else if (preset == "drift") cfg.synth = drift_synth_config(size, seed);
      else throw ParseError(path + ": unknown synth preset " + preset);
    }
    cfg.chunk = j.value("chunk", cfg.chunk);
    if (j.contains("eval_fraction")) {
      cfg.eval_num = j.at("eval_fraction").at(0).get<std::int64_t>();
      cfg.eval_den = j.at("eval_fraction").at(1).get<std::int64_t>();
    }
    if (j.contains("seeds"))
      cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("conditions"))
      cfg.conditions = j.at("conditions").get<std::vector<std::string>>();
    if (j.contains("labeler_presets"))
      cfg.labeler_presets =
          j.at("labeler_presets").get<std::map<std::string, std::string>>();
    cfg.pcfg_merge = j.value("pcfg_merge", cfg.pcfg_merge);
    cfg.theta = j.value("theta", cfg.theta);
    cfg.theta_sweep = j.value("theta_sweep", cfg.theta_sweep);
    if (j.contains("sweep")) {
      cfg.sweep_lo = j.at("sweep").at(0).get<double>();
      cfg.sweep_hi = j.at("sweep").at(1).get<double>();
      cfg.sweep_step = j.at("sweep").at(2).get<double>();
    }
    if (j.contains("dev_path")) cfg.dev_path = j.at("dev_path").get<std::string>();
    cfg.em_max_iter = j.value("em_max_iter", cfg.em_max_iter);
    cfg.em_rel_tol = j.value("em_rel_tol", cfg.em_rel_tol);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

struct RunScore {
  std::uint64_t seed = 0;
  SlotReport report;
};

struct CurveRow {
  std::string condition;  // weak, supervised, retrain-seq,
                          // retrain-pcfg/single-run, retrain-pcfg/all-runs
  std::size_t train_size = 0;
  std::vector<RunScore> runs;
  CurvePoint point;
};

struct CurveReport {
  std::vector<CurveRow> rows;

  const CurveRow* find(const std::string& condition, std::size_t size) const {
    for (const auto& r : rows)
      if (r.condition == condition && r.train_size == size) return &r;
    return nullptr;
  }
};

// Runs the experimental conditions over learning-curve partitions and seeds.
// Weak models, self-labelings and grammars are memoized per (size, seed), so
// the conditions that share a weak decoding reuse it; this does not change
// any condition's numbers, it only avoids retraining the same model.
class CurveRunner {
 public:
  CurveRunner(ExperimentConfig cfg, Corpus corpus)
      : cfg_(std::move(cfg)), corpus_(std::move(corpus)) {
    part_ = partition_learning_curve(corpus_, cfg_.chunk, cfg_.eval_num,
                                     cfg_.eval_den);
    for (const auto& u : part_.eval.utterances)
      eval_refs_.push_back(prune_reference(u));
  }

  const ExperimentConfig& config() const { return cfg_; }
  const Partition& partition() const { return part_; }
  const std::vector<SemanticFrame>& eval_references() const { return eval_refs_; }

  const WeakHmm& weak_model(std::size_t size, std::uint64_t seed) {
    const auto key = std::make_pair(size, seed);
    auto it = weak_models_.find(key);
    if (it != weak_models_.end()) return *it->second;
    Corpus train = prefix(part_.pool, size);
    auto model = std::make_unique<WeakHmm>(
        WeakHmm::init(train.schema, corpus_vocabulary(train), seed));
    model->set_threshold(cfg_.theta);
    model->train_em(train, cfg_.em_max_iter, cfg_.em_rel_tol);
    return *weak_models_.emplace(key, std::move(model)).first->second;
  }

  // Masked Viterbi decoding of the training prefix: the frame is known on
  // training data, so the path is restricted to the frame's states. Gold
  // tags never enter; only words and frames are consumed.
  const std::vector<TaggedUtterance>& self_labels(std::size_t size,
                                                  std::uint64_t seed) {
    const auto key = std::make_pair(size, seed);
    auto it = self_labels_.find(key);
    if (it != self_labels_.end()) return it->second;
    const WeakHmm& model = weak_model(size, seed);
    std::vector<TaggedUtterance> labels;
    const Corpus train = prefix(part_.pool, size);
    for (const auto& u : train.utterances)
      labels.push_back(model.viterbi_decode(u.words, model.allowed_states(u)));
    return self_labels_.emplace(key, std::move(labels)).first->second;
  }

  const Pcfg& grammar(std::size_t size, std::uint64_t seed) {
    const auto key = std::make_pair(size, seed);
    auto it = grammars_.find(key);
    if (it != grammars_.end()) return it->second;
    std::vector<TreeNode> trees;
    for (const auto& t : self_labels(size, seed)) trees.push_back(tags_to_tree(t));
    return grammars_.emplace(key, Pcfg::induce(trees)).first->second;
  }

  const std::map<std::pair<std::size_t, std::uint64_t>, Pcfg>& grammars() const {
    return grammars_;
  }
  const std::map<std::size_t, Pcfg>& merged_grammars() const { return merged_; }

  SlotReport score_grammar(const Pcfg& grammar) const {
    std::vector<SemanticFrame> predicted;
    for (const auto& u : part_.eval.utterances) {
      const ParseResult res = grammar.viterbi_parse(u.words);
      if (res.ok())
        predicted.push_back(
            tags_to_frame(corpus_.schema, tree_to_tags(*res.tree)));
      else
        predicted.push_back(SemanticFrame::movecard());  // parse failure
    }
    return score_frames(predicted, eval_refs_);
  }

  double parseable_fraction(const Pcfg& grammar) const {
    if (part_.eval.utterances.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& u : part_.eval.utterances)
      if (grammar.viterbi_parse(u.words).ok()) ++ok;
    return static_cast<double>(ok) /
           static_cast<double>(part_.eval.utterances.size());
  }

  SlotReport run_condition(const std::string& condition, std::size_t size,
                           std::uint64_t seed) {
    if (condition == "supervised") {
      std::vector<SeqExample> data;
      const Corpus train = prefix(part_.pool, size);
      for (const auto& u : train.utterances) {
        if (!u.gold_tags)
          throw DataError("supervised condition needs gold tags (utterance " +
                          u.id + ")");
        SeqExample e;
        e.tokens = u.words;
        for (const auto& t : *u.gold_tags) e.labels.push_back(t.str());
        data.push_back(std::move(e));
      }
      const LabelerPreset preset = cfg_.preset_for(condition);
      const LinearChainModel model = train_labeler(
          data, FeatureTemplates{}, preset.epochs, preset.averaged, seed);
      std::vector<SemanticFrame> predicted;
      for (const auto& u : part_.eval.utterances) {
        TaggedUtterance tu;
        tu.words = u.words;
        for (const auto& l : model.tag(u.words))
          tu.tags.push_back(ConceptTag::parse(l));
        predicted.push_back(tags_to_frame(corpus_.schema, tu));
      }
      return score_frames(predicted, eval_refs_);
    }
    if (condition == "weak") {
      const WeakHmm& model = weak_model(size, seed);
      std::vector<SemanticFrame> predicted;
      for (const auto& u : part_.eval.utterances)
        predicted.push_back(model.fill_frame_weak(u.words));
      return score_frames(predicted, eval_refs_);
    }
    if (condition == "retrain-seq") {
      const LabelerPreset preset = cfg_.preset_for(condition);
      const TwoStepModel model =
          train_two_step(self_labels(size, seed), preset, seed);
      std::vector<SemanticFrame> predicted;
      for (const auto& u : part_.eval.utterances)
        predicted.push_back(
            tags_to_frame(corpus_.schema, tag_two_step(model, u.words)));
      return score_frames(predicted, eval_refs_);
    }
    if (condition == "retrain-pcfg") return score_grammar(grammar(size, seed));
    throw DataError("unknown condition: " + condition);
  }

  CurveReport run_learning_curve() {
    CurveReport report;
    for (const auto& condition : cfg_.conditions) {
      for (const std::size_t size : part_.train_sizes) {
        if (condition == "supervised") {
          // No initialization randomness: one run, degenerate interval.
          CurveRow row{condition, size, {}, {}};
          const SlotReport r = run_condition(condition, size, cfg_.seeds[0]);
          row.runs.push_back({cfg_.seeds[0], r});
          row.point = degenerate_point(size, r.f1);
          report.rows.push_back(std::move(row));
          continue;
        }
        if (condition == "retrain-pcfg") {
          const bool single =
              cfg_.pcfg_merge == "single-run" || cfg_.pcfg_merge == "both";
          const bool all =
              cfg_.pcfg_merge == "all-runs" || cfg_.pcfg_merge == "both";
          if (single) {
            CurveRow row{condition + "/single-run", size, {}, {}};
            for (const auto seed : cfg_.seeds)
              row.runs.push_back({seed, run_condition(condition, size, seed)});
            row.point = point_from_runs(size, row.runs);
            report.rows.push_back(std::move(row));
          }
          if (all) {
            std::vector<Pcfg> parts;
            for (const auto seed : cfg_.seeds) parts.push_back(grammar(size, seed));
            const Pcfg& merged =
                merged_.emplace(size, Pcfg::merge(parts)).first->second;
            CurveRow row{condition + "/all-runs", size, {}, {}};
            row.runs.push_back({cfg_.seeds[0], score_grammar(merged)});
            row.point = degenerate_point(size, row.runs[0].report.f1);
            report.rows.push_back(std::move(row));
          }
          continue;
        }
        CurveRow row{condition, size, {}, {}};
        for (const auto seed : cfg_.seeds)
          row.runs.push_back({seed, run_condition(condition, size, seed)});
        row.point = point_from_runs(size, row.runs);
        report.rows.push_back(std::move(row));
      }
    }
    return report;
  }

 private:
  static CurvePoint degenerate_point(std::size_t size, double f1) {
    return {size, f1, f1, f1, {f1}};
  }

  static CurvePoint point_from_runs(std::size_t size,
                                    const std::vector<RunScore>& runs) {
    if (runs.size() == 1) return degenerate_point(size, runs[0].report.f1);
    std::vector<double> f1s;
    for (const auto& r : runs) f1s.push_back(r.report.f1);
    return aggregate_runs(f1s, size);
  }

  ExperimentConfig cfg_;
  Corpus corpus_;
  Partition part_;
  std::vector<SemanticFrame> eval_refs_;
  std::map<std::pair<std::size_t, std::uint64_t>, std::unique_ptr<WeakHmm>>
      weak_models_;
  std::map<std::pair<std::size_t, std::uint64_t>, std::vector<TaggedUtterance>>
      self_labels_;
  std::map<std::pair<std::size_t, std::uint64_t>, Pcfg> grammars_;
  std::map<std::size_t, Pcfg> merged_;
};

// Grid search over the threshold, maximizing dev slot-F of posterior-based
// frame filling; ties resolve to the smallest grid point. The per-utterance
// state scores are computed once and reused across the grid.
inline double calibrate_from_scores(
    const StateInventory& inv,
    const std::vector<std::vector<double>>& utterance_scores,
    const std::vector<SemanticFrame>& dev_refs, double lo, double hi,
    double step) {
  if (utterance_scores.empty()) throw DataError("empty dev set");
  if (utterance_scores.size() != dev_refs.size())
    throw DataError("dev score/reference count mismatch");
  if (step <= 0.0 || hi < lo) throw DataError("bad threshold grid");
  double best_theta = lo;
  double best_f1 = -1.0;
  for (int k = 0;; ++k) {
    const double theta = lo + k * step;
    if (theta > hi + 1e-12) break;
    std::vector<SemanticFrame> predicted;
    for (const auto& scores : utterance_scores)
      predicted.push_back(
          WeakHmm::frame_from_state_scores(inv, scores, theta));
    const double f1 = score_frames(predicted, dev_refs).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_theta = theta;
    }
  }
  return best_theta;
}

inline double calibrate_threshold(const ExperimentConfig& cfg,
                                  const Corpus& corpus, const Corpus& dev) {
  if (dev.utterances.empty()) throw DataError("empty dev set");
  const Partition part =
      partition_learning_curve(corpus, cfg.chunk, cfg.eval_num, cfg.eval_den);
  WeakHmm model = WeakHmm::init(part.pool.schema, corpus_vocabulary(part.pool),
                                cfg.seeds[0]);
  model.train_em(part.pool, cfg.em_max_iter, cfg.em_rel_tol);
  std::vector<std::vector<double>> utterance_scores;
  std::vector<SemanticFrame> dev_refs;
  for (const auto& u : dev.utterances) {
    const TokenPosterior post = model.token_posteriors(u.words);
    std::vector<double> scores(
        static_cast<std::size_t>(model.inventory().num_states()), 0.0);
    for (const auto& row : post.rows)
      for (std::size_t s = 0; s < row.size(); ++s) scores[s] += row[s];
    utterance_scores.push_back(std::move(scores));
    dev_refs.push_back(prune_reference(u));
  }
  return calibrate_from_scores(model.inventory(), utterance_scores, dev_refs,
                               cfg.sweep_lo, cfg.sweep_hi, cfg.sweep_step);
}

namespace detail {

inline std::string csv_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace detail

// Writes per-run and aggregate CSVs, the per-(size, seed) grammars plus the
// merged grammar per size, and a pretty-printed grammar (display filter
// 0.5%) for the largest training size.
inline void export_report(
    const CurveReport& report,
    const std::map<std::pair<std::size_t, std::uint64_t>, Pcfg>& grammars,
    const std::map<std::size_t, Pcfg>& merged, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

  {
    std::ofstream out(out_dir + "/per_run.csv");
    if (!out) throw IoError("cannot write " + out_dir + "/per_run.csv");
    out << "train_size,condition,run,precision,recall,f1\n";
    for (const auto& row : report.rows) {
      const bool pooled = row.condition.size() > 9 &&
                          row.condition.rfind("/all-runs") ==
                              row.condition.size() - 9;
      for (const auto& run : row.runs) {
        out << row.train_size << ',' << row.condition << ',';
        if (pooled) out << "all";
        else out << run.seed;
        out << ',' << detail::csv_num(run.report.precision) << ','
            << detail::csv_num(run.report.recall) << ','
            << detail::csv_num(run.report.f1) << '\n';
      }
    }
  }
  {
    std::ofstream out(out_dir + "/aggregate.csv");
    if (!out) throw IoError("cannot write " + out_dir + "/aggregate.csv");
    out << "train_size,condition,runs,mean_f1,ci95_low,ci95_high\n";
    for (const auto& row : report.rows) {
      out << row.train_size << ',' << row.condition << ',' << row.runs.size()
          << ',' << detail::csv_num(row.point.mean_f1) << ','
          << detail::csv_num(row.point.ci95_low) << ','
          << detail::csv_num(row.point.ci95_high) << '\n';
    }
  }
  if (!grammars.empty() || !merged.empty()) {
    const std::string gdir = out_dir + "/grammars";
    fs::create_directories(gdir, ec);
    if (ec) throw IoError("cannot create " + gdir + ": " + ec.message());
    for (const auto& [key, g] : grammars)
      g.save(gdir + "/size" + std::to_string(key.first) + "_seed" +
             std::to_string(key.second) + ".pcfg");
    for (const auto& [size, g] : merged)
      g.save(gdir + "/size" + std::to_string(size) + "_allruns.pcfg");
    const Pcfg* show = nullptr;
    if (!merged.empty()) show = &merged.rbegin()->second;
    else show = &grammars.rbegin()->second;
    std::ofstream out(out_dir + "/grammar_pretty.txt");
    if (!out) throw IoError("cannot write " + out_dir + "/grammar_pretty.txt");
    out << show->pretty(0.005);
  }
}

}  // namespace slotgram
