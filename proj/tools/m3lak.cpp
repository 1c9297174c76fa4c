// Command-line front end: train | predict | cv.
//
// Exit codes: 0 success, 2 usage, 3 data, 4 numerical.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m3lak/cli.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Options {
  std::vector<std::string> views;
  std::string labels;
  std::string out;
  std::string model;
  std::string c = "auto";
  std::vector<long> k = {5};
  std::size_t iters = 1000;
  std::size_t burnin = 800;
  std::size_t collect = 0;
  std::size_t thin = 1;
  std::string standardize = "true";
  std::string latent_mode = "per-snapshot";
  bool quiet = false;
};

bool parse_bool(const std::string& flag, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw m3lak::InvalidParameter(flag + ": expected true or false, got '" + value + "'");
}

m3lak::RunConfig to_run_config(const Options& o, m3lak::RunConfig cfg) {
  for (const auto& v : o.views) cfg.views.emplace_back(v);
  if (!o.labels.empty()) cfg.labels = o.labels;
  if (!o.model.empty()) cfg.model = o.model;
  cfg.out = o.out;
  auto& sc = cfg.sampler;
  sc.max_iter = o.iters;
  sc.burn_in = o.burnin;
  sc.thinning = o.thin;
  if (o.burnin >= o.iters) throw m3lak::InvalidParameter("--burnin must be smaller than --iters");
  sc.collect_count = o.collect ? o.collect : (o.iters - o.burnin) / o.thin;
  sc.hyper.K.assign(o.k.begin(), o.k.end());
  sc.hmc_omega.leapfrog_steps = sc.hmc_h.leapfrog_steps;
  if (o.c == "auto") {
    cfg.auto_c = true;
  } else {
    cfg.auto_c = false;
    try {
      sc.hyper.C = std::stod(o.c);
    } catch (const std::exception&) {
      throw m3lak::InvalidParameter("--C: expected 'auto' or a positive number, got '" + o.c + "'");
    }
  }
  cfg.standardize = parse_bool("--standardize", o.standardize);
  if (o.latent_mode == "per-snapshot") cfg.latent_mode = m3lak::LatentMode::per_snapshot;
  else if (o.latent_mode == "averaged") cfg.latent_mode = m3lak::LatentMode::averaged;
  else throw m3lak::InvalidParameter("--latent-mode: expected per-snapshot or averaged, got '" + o.latent_mode + "'");
  if (!o.quiet) cfg.log = &std::cerr;
  return cfg;
}

void add_sampler_options(CLI::App& cmd, Options& o, m3lak::RunConfig& cfg) {
  auto& hp = cfg.sampler.hyper;
  cmd.add_option("--views", o.views, "Comma-separated CSV files, one per view (rows = instances)")
      ->required()
      ->delimiter(',');
  cmd.add_option("--labels", o.labels, "Label file, one +1/-1 per line");
  cmd.add_option("--out", o.out, "Output directory")->required();
  cmd.add_option("--m", hp.m, "Shared latent dimension")->capture_default_str();
  cmd.add_option("--M", hp.M, "Number of random Fourier frequencies")->capture_default_str();
  cmd.add_option("--K", o.k, "Private latent dimension (one value, or one per view)")->delimiter(',');
  cmd.add_option("--C", o.c, "Regularization: a number or 'auto' for cross-validation over 1..10")
      ->capture_default_str();
  cmd.add_option("--iters", o.iters, "Total sweeps")->capture_default_str();
  cmd.add_option("--burnin", o.burnin, "Burn-in sweeps")->capture_default_str();
  cmd.add_option("--collect", o.collect, "Snapshots to keep (default: (iters - burnin) / thin)");
  cmd.add_option("--warmup", cfg.sampler.lvm_warmup, "LVM-only sweeps before the first full sweep")
      ->capture_default_str();
  cmd.add_option("--thin", o.thin, "Thinning interval")->capture_default_str();
  cmd.add_option("--seed", cfg.sampler.seed, "Master random seed")->capture_default_str();
  cmd.add_option("--standardize", o.standardize, "Standardize features with training statistics")
      ->capture_default_str();
  cmd.add_option("--folds", cfg.folds, "Cross-validation folds")->capture_default_str();
  cmd.add_option("--eta", hp.eta, "Precision of the private projections")->capture_default_str();
  cmd.add_option("--alpha", hp.alpha, "DP concentration")->capture_default_str();
  cmd.add_option("--v", hp.v, "Prior precision of the classifier weights")->capture_default_str();
  cmd.add_option("--a-r", hp.a_r, "ARD Gamma shape")->capture_default_str();
  cmd.add_option("--b-r", hp.b_r, "ARD Gamma rate")->capture_default_str();
  cmd.add_option("--a-tau", hp.a_tau, "Noise precision Gamma shape")->capture_default_str();
  cmd.add_option("--b-tau", hp.b_tau, "Noise precision Gamma rate")->capture_default_str();
  cmd.add_option("--leapfrog", cfg.sampler.hmc_h.leapfrog_steps, "Leapfrog steps per HMC proposal")
      ->capture_default_str();
  cmd.add_option("--latent-mode", o.latent_mode, "Test latent inference: per-snapshot or averaged")
      ->capture_default_str();
  cmd.add_flag("--quiet", o.quiet, "Suppress progress output");
}

void print_metrics(const m3lak::MetricsReport& m) {
  std::cout << "instances: " << m.n_instances << '\n';
  if (m.accuracy) std::cout << "accuracy: " << *m.accuracy << '\n';
  if (m.selected_c) std::cout << "C: " << *m.selected_c << '\n';
  if (m.cv) {
    for (std::size_t c = 0; c < m.cv->candidates.size(); ++c)
      std::cout << "cv C=" << m.cv->candidates[c] << ": " << m.cv->mean_accuracy[c] << " +/- "
                << m.cv->std_accuracy[c] << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-kernel max-margin multi-view classification"};
  app.require_subcommand(1);

  Options train_opt, predict_opt, cv_opt;
  m3lak::RunConfig train_cfg, predict_cfg, cv_cfg;
  train_cfg.mode = m3lak::RunMode::train;
  predict_cfg.mode = m3lak::RunMode::predict;
  cv_cfg.mode = m3lak::RunMode::cv;

  auto* train = app.add_subcommand("train", "Fit the model and write DIR/model.json and DIR/metrics.json");
  add_sampler_options(*train, train_opt, train_cfg);

  auto* predict = app.add_subcommand("predict", "Score new instances with a trained model");
  predict->add_option("--model", predict_opt.model, "Model file written by train")->required();
  predict->add_option("--views", predict_opt.views, "Comma-separated CSV files, one per view")
      ->required()
      ->delimiter(',');
  predict->add_option("--labels", predict_opt.labels, "Optional true labels for accuracy");
  predict->add_option("--out", predict_opt.out, "Output directory for predictions.txt and metrics.json")->required();
  predict->add_option("--latent-mode", predict_opt.latent_mode, "per-snapshot or averaged")->capture_default_str();
  predict->add_flag("--quiet", predict_opt.quiet, "Suppress progress output");

  auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation over the C candidates");
  add_sampler_options(*cv, cv_opt, cv_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      auto cfg = to_run_config(train_opt, train_cfg);
      const auto out = m3lak::run_train(cfg);
      print_metrics(out.metrics);
      std::cout << "model: " << out.model_path.string() << '\n';
    } else if (*predict) {
      auto cfg = to_run_config(predict_opt, predict_cfg);
      const auto out = m3lak::run_predict(cfg);
      print_metrics(out.metrics);
      std::cout << "predictions: " << out.predictions_path.string() << '\n';
    } else if (*cv) {
      auto cfg = to_run_config(cv_opt, cv_cfg);
      cfg.auto_c = true;
      const auto out = m3lak::run_cv(cfg);
      print_metrics(out.metrics);
    }
  } catch (const m3lak::InvalidData& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const m3lak::InvalidParameter& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const m3lak::Error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
