#pragma once

// Batch driver behind the command-line tool: training, prediction and
// cross-validation over CSV views, with JSON model and metrics files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "m3lak/error.hpp"
#include "m3lak/io.hpp"
#include "m3lak/rng.hpp"
#include "m3lak/sampler.hpp"

namespace m3lak {

enum class RunMode { train, predict, cv };

struct RunConfig {
  RunMode mode = RunMode::train;
  std::vector<fs::path> views;
  std::optional<fs::path> labels;
  fs::path out;
  std::optional<fs::path> model;  // predict only
  SamplerConfig sampler;
  bool standardize = true;
  bool auto_c = true;  // choose C by cross-validation before training
  std::vector<double> c_candidates = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t folds = 5;
  LatentMode latent_mode = LatentMode::per_snapshot;
  std::ostream* log = nullptr;
};

struct ClassCounts {
  std::size_t predicted_pos = 0;
  std::size_t predicted_neg = 0;
  // Filled only when true labels are known.
  std::size_t true_pos = 0;
  std::size_t true_neg = 0;
  std::size_t false_pos = 0;
  std::size_t false_neg = 0;
};

struct CvReport {
  std::vector<double> candidates;
  std::vector<std::vector<double>> fold_accuracy;  // [candidate][fold]
  std::vector<double> mean_accuracy;
  std::vector<double> std_accuracy;
  std::vector<std::size_t> fold_sizes;
  double selected_c = 0.0;

  json to_json() const {
    json per = json::array();
    for (std::size_t c = 0; c < candidates.size(); ++c)
      per.push_back({{"C", candidates[c]},
                     {"fold_accuracy", fold_accuracy[c]},
                     {"mean_accuracy", mean_accuracy[c]},
                     {"std_accuracy", std_accuracy[c]}});
    return {{"folds", fold_sizes.size()}, {"fold_sizes", fold_sizes}, {"candidates", per}, {"selected_C", selected_c}};
  }
};

struct MetricsReport {
  std::string mode;
  std::size_t n_instances = 0;
  std::optional<double> accuracy;
  ClassCounts counts;
  bool labeled = false;
  double train_seconds = 0.0;
  std::vector<double> sweep_seconds;
  std::optional<double> acceptance_h;
  std::optional<double> acceptance_omega;
  std::optional<std::size_t> active_components;
  std::optional<double> selected_c;
  std::optional<CvReport> cv;

  /// Every key is always present; values that do not apply are null.
  json to_json() const {
    auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
    json counts_json = {{"predicted_pos", counts.predicted_pos}, {"predicted_neg", counts.predicted_neg}};
    json confusion = nullptr;
    if (labeled)
      confusion = {{"true_pos", counts.true_pos},
                   {"true_neg", counts.true_neg},
                   {"false_pos", counts.false_pos},
                   {"false_neg", counts.false_neg}};
    return {{"mode", mode},
            {"n_instances", n_instances},
            {"accuracy", opt(accuracy)},
            {"class_counts", counts_json},
            {"confusion", confusion},
            {"train_seconds", train_seconds},
            {"sweep_seconds", sweep_seconds},
            {"acceptance_h", opt(acceptance_h)},
            {"acceptance_omega", opt(acceptance_omega)},
            {"active_components", opt(active_components)},
            {"selected_C", opt(selected_c)},
            {"cv", cv ? cv->to_json() : json(nullptr)}};
  }
};

// ---------------------------------------------------------------------------
// Helpers

inline MultiViewDataset subset(const MultiViewDataset& data, const std::vector<std::size_t>& idx) {
  MultiViewDataset out;
  for (const auto& x : data.views) {
    MatrixXd sub(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
    out.views.push_back(std::move(sub));
  }
  if (data.labels) {
    VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) y[static_cast<Eigen::Index>(k)] = (*data.labels)[static_cast<Eigen::Index>(idx[k])];
    out.labels = std::move(y);
  }
  return out;
}

/// Stratified k-fold partition: each class is shuffled with a fixed seed and dealt
/// round-robin, continuing across classes, so fold sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> stratified_folds(const VectorXd& y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidParameter("cross-validation needs at least 2 folds");
  std::vector<std::size_t> pos, neg;
  for (Eigen::Index n = 0; n < y.size(); ++n) (y[n] > 0 ? pos : neg).push_back(static_cast<std::size_t>(n));
  auto rng = RngStream::keyed(seed, {tag(StreamTag::folds)});
  std::shuffle(pos.begin(), pos.end(), rng.engine());
  std::shuffle(neg.begin(), neg.end(), rng.engine());
  for (const auto* cls : {&pos, &neg})
    if (!cls->empty() && cls->size() < k)
      throw InvalidData("stratification: class " + std::string(cls == &pos ? "+1" : "-1") + " has " +
                        std::to_string(cls->size()) + " instances, fewer than " + std::to_string(k) + " folds");
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t slot = 0;
  for (const auto* cls : {&pos, &neg})
    for (auto idx : *cls) folds[slot++ % k].push_back(idx);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

inline ClassCounts count_classes(const std::vector<int>& predicted, const VectorXd* truth) {
  ClassCounts c;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    (predicted[k] > 0 ? c.predicted_pos : c.predicted_neg)++;
    if (!truth) continue;
    const bool t = (*truth)[static_cast<Eigen::Index>(k)] > 0;
    const bool p = predicted[k] > 0;
    if (t && p) ++c.true_pos;
    else if (!t && !p) ++c.true_neg;
    else if (!t && p) ++c.false_pos;
    else ++c.false_neg;
  }
  return c;
}

inline double accuracy(const std::vector<int>& predicted, const VectorXd& truth) {
  if (predicted.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t k = 0; k < predicted.size(); ++k)
    if ((predicted[k] > 0) == (truth[static_cast<Eigen::Index>(k)] > 0)) ++hit;
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (zero for fewer than two values).
inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double post_burn_in_mean(const std::vector<double>& v, std::size_t burn_in) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t k = burn_in; k < v.size(); ++k)
    if (std::isfinite(v[k])) s += v[k], ++n;
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

struct FitResult {
  ModelFile model;
  TrainResult result;
};

/// Standardizes (when enabled), trains, and packages the model.
inline FitResult fit_model(const MultiViewDataset& raw, const SamplerConfig& config, bool standardize) {
  FitResult out;
  out.model.standardization = standardize ? Standardization::fit(raw) : Standardization{};
  const auto data = out.model.standardization.apply(raw);
  out.result = train(data, config);
  out.model.samples = out.result.samples;
  out.model.seed = config.seed;
  out.model.hyper = config.hyper;
  return out;
}

inline Prediction predict_model(const ModelFile& model, const std::vector<MatrixXd>& raw_views, LatentMode mode) {
  const auto& dims = model.samples.feature_dims();
  if (raw_views.size() != dims.size())
    throw InvalidData("model expects " + std::to_string(dims.size()) + " views, got " + std::to_string(raw_views.size()));
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (raw_views[i].rows() != dims[i])
      throw InvalidData("view " + std::to_string(i) + ": model expects D=" + std::to_string(dims[i]) + " features, got D=" +
                        std::to_string(raw_views[i].rows()));
  return predict(model.samples, model.standardization.apply(raw_views), mode);
}

// ---------------------------------------------------------------------------
// Commands

inline CvReport cross_validate(const MultiViewDataset& raw, const RunConfig& cfg) {
  const auto& y = labels_of(raw);
  const auto folds = stratified_folds(y, cfg.folds, cfg.sampler.seed);
  CvReport rep;
  rep.candidates = cfg.c_candidates;
  for (const auto& f : folds) rep.fold_sizes.push_back(f.size());
  for (std::size_t ci = 0; ci < cfg.c_candidates.size(); ++ci) {
    std::vector<double> accs;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train_idx;
      for (std::size_t g = 0; g < folds.size(); ++g)
        if (g != f) train_idx.insert(train_idx.end(), folds[g].begin(), folds[g].end());
      std::sort(train_idx.begin(), train_idx.end());
      SamplerConfig sc = cfg.sampler;
      sc.hyper.C = cfg.c_candidates[ci];
      sc.seed = splitmix64(cfg.sampler.seed ^ splitmix64((ci + 1) * 1000003ULL + f));
      const auto fit = fit_model(subset(raw, train_idx), sc, cfg.standardize);
      const auto held = subset(raw, folds[f]);
      const auto pred = predict_model(fit.model, held.views, cfg.latent_mode);
      accs.push_back(accuracy(pred.labels, *held.labels));
      if (cfg.log)
        *cfg.log << "cv: C=" << cfg.c_candidates[ci] << " fold " << f + 1 << "/" << folds.size()
                 << " accuracy " << accs.back() << '\n';
    }
    rep.mean_accuracy.push_back(mean_of(accs));
    rep.std_accuracy.push_back(std_of(accs));
    rep.fold_accuracy.push_back(std::move(accs));
  }
  std::size_t best = 0;
  for (std::size_t ci = 1; ci < rep.candidates.size(); ++ci) {
    const bool better = rep.mean_accuracy[ci] > rep.mean_accuracy[best] ||
                        (rep.mean_accuracy[ci] == rep.mean_accuracy[best] && rep.candidates[ci] < rep.candidates[best]);
    if (better) best = ci;
  }
  rep.selected_c = rep.candidates.at(best);
  return rep;
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidData("cannot create output directory " + dir.string() + ": " + ec.message());
}

/// Writes the last consistent state of a failed run and returns its path.
inline fs::path write_diagnostic(const fs::path& dir, const SamplerAbort& abort) {
  json snap;
  snap["sweep"] = abort.sweep();
  snap["step"] = abort.step();
  snap["message"] = abort.what();
  json views = json::array();
  for (const auto& v : abort.last_state().views) views.push_back({{"tau", v.tau}, {"W", detail::matrix_rows(v.W)}});
  snap["views"] = views;
  snap["beta"] = detail::vector_array(abort.last_state().beta);
  snap["omegas"] = detail::matrix_rows(abort.last_state().omegas.transpose());
  const auto path = dir / "diagnostic.json";
  save_json(path, snap);
  return path;
}

struct TrainOutcome {
  ModelFile model;
  MetricsReport metrics;
  fs::path model_path;
  fs::path metrics_path;
};

inline TrainOutcome run_train(const RunConfig& cfg) {
  if (!cfg.labels) throw InvalidParameter("train: --labels is required");
  if (cfg.out.empty()) throw InvalidParameter("train: --out is required");
  const auto raw = ingest(cfg.views, cfg.labels);
  ensure_dir(cfg.out);
  SamplerConfig sc = cfg.sampler;
  TrainOutcome out;
  out.metrics.mode = "train";
  out.metrics.n_instances = static_cast<std::size_t>(raw.num_instances());
  const auto started = std::chrono::steady_clock::now();
  if (cfg.auto_c) {
    out.metrics.cv = cross_validate(raw, cfg);
    sc.hyper.C = out.metrics.cv->selected_c;
  }
  FitResult fit;
  try {
    fit = fit_model(raw, sc, cfg.standardize);
  } catch (const SamplerAbort& abort) {
    const auto path = write_diagnostic(cfg.out, abort);
    throw NumericalDegeneracy(std::string(abort.what()) + " (diagnostic written to " + path.string() + ")");
  }
  out.metrics.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const auto& diag = fit.result.diagnostics;
  out.metrics.sweep_seconds = diag.sweep_seconds;
  out.metrics.acceptance_h = post_burn_in_mean(diag.accept_h, sc.burn_in);
  out.metrics.acceptance_omega = post_burn_in_mean(diag.accept_omega, sc.burn_in);
  out.metrics.active_components = diag.active_components.empty() ? 0 : diag.active_components.back();
  out.metrics.selected_c = sc.hyper.C;
  const auto pred = predict_model(fit.model, raw.views, cfg.latent_mode);
  out.metrics.labeled = true;
  out.metrics.accuracy = accuracy(pred.labels, *raw.labels);
  out.metrics.counts = count_classes(pred.labels, &*raw.labels);

  out.model = std::move(fit.model);
  out.model_path = cfg.out / "model.json";
  out.metrics_path = cfg.out / "metrics.json";
  save_model(out.model_path, out.model);
  save_json(out.metrics_path, out.metrics.to_json());
  return out;
}

struct PredictOutcome {
  Prediction prediction;
  MetricsReport metrics;
  fs::path predictions_path;
  fs::path metrics_path;
};

inline PredictOutcome run_predict(const RunConfig& cfg) {
  if (!cfg.model) throw InvalidParameter("predict: --model is required");
  if (cfg.out.empty()) throw InvalidParameter("predict: --out is required");
  const auto model = load_model(*cfg.model);
  const auto raw = ingest(cfg.views, cfg.labels);
  ensure_dir(cfg.out);
  PredictOutcome out;
  out.prediction = predict_model(model, raw.views, cfg.latent_mode);
  out.metrics.mode = "predict";
  out.metrics.n_instances = static_cast<std::size_t>(raw.num_instances());
  out.metrics.labeled = raw.labeled();
  out.metrics.counts = count_classes(out.prediction.labels, raw.labels ? &*raw.labels : nullptr);
  if (raw.labels) out.metrics.accuracy = accuracy(out.prediction.labels, *raw.labels);

  out.predictions_path = cfg.out / "predictions.txt";
  std::ofstream pf(out.predictions_path);
  if (!pf) throw InvalidData("cannot write " + out.predictions_path.string());
  pf.precision(17);
  for (std::size_t k = 0; k < out.prediction.labels.size(); ++k)
    pf << out.prediction.scores[static_cast<Eigen::Index>(k)] << ' ' << out.prediction.labels[k] << '\n';
  out.metrics_path = cfg.out / "metrics.json";
  save_json(out.metrics_path, out.metrics.to_json());
  return out;
}

struct CvOutcome {
  CvReport report;
  MetricsReport metrics;
  fs::path metrics_path;
};

inline CvOutcome run_cv(const RunConfig& cfg) {
  if (!cfg.labels) throw InvalidParameter("cv: --labels is required");
  if (cfg.out.empty()) throw InvalidParameter("cv: --out is required");
  const auto raw = ingest(cfg.views, cfg.labels);
  ensure_dir(cfg.out);
  const auto started = std::chrono::steady_clock::now();
  CvOutcome out;
  out.report = cross_validate(raw, cfg);
  out.metrics.mode = "cv";
  out.metrics.n_instances = static_cast<std::size_t>(raw.num_instances());
  out.metrics.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const auto best = static_cast<std::size_t>(
      std::find(out.report.candidates.begin(), out.report.candidates.end(), out.report.selected_c) -
      out.report.candidates.begin());
  out.metrics.accuracy = out.report.mean_accuracy.at(best);
  out.metrics.selected_c = out.report.selected_c;
  out.metrics.cv = out.report;
  out.metrics_path = cfg.out / "metrics.json";
  save_json(out.metrics_path, out.metrics.to_json());
  return out;
}

}  // namespace m3lak
