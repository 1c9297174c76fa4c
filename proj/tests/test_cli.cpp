#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "m3lak/cli.hpp"

using namespace m3lak;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("m3lak_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& f) const { return path / f; }
};

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Files {
  fs::path a, b, y;
};

// Two noisy linear views of a 2-d latent; the label is the sign of the first coordinate,
// which is kept at least 0.3 from zero so the classes stay separable through the noise.
Files write_problem(const TempDir& dir, const std::string& tag, Eigen::Index n, std::uint64_t seed) {
  RngStream rng(seed);
  MatrixXd h(2, n);
  for (Eigen::Index k = 0; k < h.size(); ++k) h.data()[k] = rng.normal();
  for (Eigen::Index k = 0; k < n; ++k)
    while (std::abs(h(0, k)) < 0.3) h(0, k) = rng.normal();
  VectorXd y(n);
  for (Eigen::Index k = 0; k < n; ++k) y[k] = h(0, k) >= 0 ? 1 : -1;
  RngStream wrng(99);
  Files f{dir / (tag + "_a.csv"), dir / (tag + "_b.csv"), dir / (tag + "_y.txt")};
  for (auto [path, dim] : {std::pair{f.a, 4}, std::pair{f.b, 3}}) {
    MatrixXd w(dim, 2);
    for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = wrng.normal();
    MatrixXd x = w * h;
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] += 0.2 * rng.normal() + 3.0;
    write_csv_matrix(path, x.transpose());
  }
  write_labels(f.y, y);
  return f;
}

RunConfig quick_config(const Files& f, const fs::path& out) {
  RunConfig c;
  c.views = {f.a, f.b};
  c.labels = f.y;
  c.out = out;
  c.auto_c = false;
  c.sampler.max_iter = 60;
  c.sampler.burn_in = 40;
  c.sampler.collect_count = 20;
  c.sampler.seed = 3;
  c.sampler.hyper.m = 2;
  c.sampler.hyper.M = 10;
  c.sampler.hyper.K = {1};
  return c;
}

}  // namespace

TEST_CASE("ingest aligns views and labels") {
  TempDir dir("ingest");
  write_text(dir / "a.csv", "1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
  write_text(dir / "b.csv", "1,2\n3,4\n5,6\n7,8\n");
  write_text(dir / "y.txt", "1\n-1\n+1\n-1\n");
  const auto data = ingest({dir / "a.csv", dir / "b.csv"}, dir / "y.txt");
  CHECK(data.num_instances() == 4);
  CHECK(data.feature_dims() == std::vector<Eigen::Index>{3, 2});
  CHECK(data.views[0](2, 1) == 6.0);
  CHECK(*data.labels == (VectorXd(4) << 1, -1, 1, -1).finished());
}

TEST_CASE("ingest errors name the problem") {
  TempDir dir("ingest_err");
  write_text(dir / "a.csv", "1,2\n3,4\n5,6\n7,8\n");
  write_text(dir / "b.csv", "1\n2\n3\n4\n5\n");
  CHECK_THROWS_WITH(ingest({dir / "a.csv", dir / "b.csv"}, std::nullopt),
                    ContainsSubstring("4 rows") && ContainsSubstring("5"));
  write_text(dir / "y.txt", "1\n0\n-1\n1\n");
  CHECK_THROWS_WITH(ingest({dir / "a.csv"}, dir / "y.txt"), ContainsSubstring("'0'"));
  CHECK_THROWS_AS(ingest({dir / "a.csv"}, dir / "y.txt"), InvalidData);
  write_text(dir / "c.csv", "1,2\n3,x\n");
  CHECK_THROWS_WITH(ingest({dir / "c.csv"}, std::nullopt), ContainsSubstring("row 2") && ContainsSubstring("column 2"));
  CHECK_THROWS_AS(ingest({dir / "missing.csv"}, std::nullopt), InvalidData);
}

TEST_CASE("standardization uses training statistics") {
  MultiViewDataset d;
  d.views = {(MatrixXd(2, 4) << 1, 2, 3, 4, 5, 5, 5, 5).finished()};
  const auto s = Standardization::fit(d);
  const auto z = s.apply(d).views[0];
  CHECK(z.row(0).mean() == Approx(0).margin(1e-15));
  CHECK(z.row(0).squaredNorm() / 4 == Approx(1.0));
  CHECK(z.row(1).cwiseAbs().maxCoeff() == 0.0);
  const auto t = s.apply(std::vector<MatrixXd>{(MatrixXd(2, 1) << 2.5, 6).finished()});
  CHECK(t[0](0, 0) == Approx(0).margin(1e-15));
  CHECK(t[0](1, 0) == 1.0);
}

TEST_CASE("default hyperparameters") {
  const Hyperparameters h;
  CHECK(h.m == 20);
  CHECK(h.M == 100);
  CHECK(h.eta == 1e3);
  CHECK(h.alpha == 1.0);
  CHECK(h.a_r == 1e-1);
  CHECK(h.a_tau == 1e-2);
  CHECK(h.v == 1e-2);
  CHECK(h.b_tau == 1e-5);
  CHECK(h.b_r == 1e-5);
  const SamplerConfig s;
  CHECK(s.max_iter == 1000);
  CHECK(s.burn_in == 800);
  CHECK(s.thinning == 1);
  const RunConfig r;
  CHECK(r.c_candidates == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(r.folds == 5);
  CHECK(r.standardize);
}

TEST_CASE("stratified folds are balanced") {
  VectorXd y(23);
  for (Eigen::Index k = 0; k < 23; ++k) y[k] = k % 3 == 0 ? 1 : -1;
  for (std::size_t k : {2u, 3u, 5u}) {
    const auto folds = stratified_folds(y, k, 11);
    std::size_t lo = 1000, hi = 0, total = 0;
    std::set<std::size_t> seen;
    for (const auto& f : folds) {
      lo = std::min(lo, f.size());
      hi = std::max(hi, f.size());
      total += f.size();
      seen.insert(f.begin(), f.end());
      std::size_t pos = 0;
      for (auto i : f) pos += y[static_cast<Eigen::Index>(i)] > 0;
      CHECK(pos >= 1);
    }
    CHECK(hi - lo <= 1);
    CHECK(total == 23);
    CHECK(seen.size() == 23);
  }
  CHECK(stratified_folds(y, 5, 11) == stratified_folds(y, 5, 11));
  VectorXd few = VectorXd::Constant(10, -1.0);
  few[0] = few[1] = 1.0;
  CHECK_THROWS_AS(stratified_folds(few, 5, 1), InvalidData);
  CHECK_THROWS_AS(stratified_folds(few, 1, 1), InvalidParameter);
}

TEST_CASE("cross-validation aggregates fold accuracies") {
  TempDir dir("cv");
  const auto f = write_problem(dir, "tr", 40, 1);
  auto cfg = quick_config(f, dir / "out");
  cfg.mode = RunMode::cv;
  cfg.c_candidates = {1, 3};
  cfg.folds = 3;
  cfg.sampler.max_iter = 20;
  cfg.sampler.burn_in = 10;
  cfg.sampler.collect_count = 5;
  const auto out = run_cv(cfg);
  const auto& r = out.report;
  REQUIRE(r.candidates.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    REQUIRE(r.fold_accuracy[c].size() == 3);
    double s = 0;
    for (double a : r.fold_accuracy[c]) s += a;
    CHECK(std::abs(r.mean_accuracy[c] - s / 3) <= 1e-12);
  }
  const std::size_t best = r.mean_accuracy[1] > r.mean_accuracy[0] ? 1 : 0;
  CHECK(r.selected_c == r.candidates[best]);
  CHECK(fs::exists(out.metrics_path));
  CHECK(*out.metrics.accuracy == r.mean_accuracy[best]);
}

TEST_CASE("metrics JSON has a fixed key set") {
  auto keys = [](const json& j) {
    std::set<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.insert(it.key());
    return out;
  };
  MetricsReport empty;
  MetricsReport full;
  full.accuracy = 0.5;
  full.labeled = true;
  full.acceptance_h = 0.7;
  full.selected_c = 2;
  full.cv = CvReport{};
  CHECK(keys(empty.to_json()) == keys(full.to_json()));
  CHECK(keys(empty.to_json()).size() == 12);
}

TEST_CASE("train then predict round trip") {
  TempDir dir("roundtrip");
  const auto f = write_problem(dir, "tr", 80, 2);
  const auto t = write_problem(dir, "te", 30, 3);
  const auto trained = run_train(quick_config(f, dir / "model"));
  REQUIRE(fs::exists(trained.model_path));
  REQUIRE(fs::exists(trained.metrics_path));
  const auto metrics = json::parse(read_text(trained.metrics_path));
  CHECK(metrics["accuracy"].get<double>() >= 0.0);
  CHECK(metrics["accuracy"].get<double>() <= 1.0);
  CHECK(metrics["class_counts"]["predicted_pos"].get<std::size_t>() +
            metrics["class_counts"]["predicted_neg"].get<std::size_t>() ==
        80);

  RunConfig pc;
  pc.mode = RunMode::predict;
  pc.model = trained.model_path;
  pc.views = {t.a, t.b};
  pc.labels = t.y;
  pc.out = dir / "pred";
  const auto predicted = run_predict(pc);
  const auto in_process = predict_model(trained.model, ingest(pc.views, std::nullopt).views, LatentMode::per_snapshot);
  CHECK(predicted.prediction.scores == in_process.scores);

  std::ifstream lines(predicted.predictions_path);
  double score;
  int label;
  std::size_t count = 0;
  while (lines >> score >> label) {
    CHECK((label == 1 || label == -1));
    CHECK(label == (score >= 0 ? 1 : -1));
    ++count;
  }
  CHECK(count == 30);
  CHECK(predicted.metrics.accuracy.has_value());
}

TEST_CASE("training set of a converged run is fit") {
  TempDir dir("fit");
  const auto f = write_problem(dir, "tr", 150, 4);
  auto cfg = quick_config(f, dir / "model");
  cfg.sampler.max_iter = 1000;
  cfg.sampler.burn_in = 800;
  cfg.sampler.collect_count = 200;
  cfg.sampler.hyper.M = 20;
  const auto trained = run_train(cfg);
  RunConfig pc;
  pc.model = trained.model_path;
  pc.views = {f.a, f.b};
  pc.labels = f.y;
  pc.out = dir / "pred";
  const auto acc = *run_predict(pc).metrics.accuracy;
  INFO("training accuracy " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("same seed writes an identical model file") {
  TempDir dir("seed");
  const auto f = write_problem(dir, "tr", 40, 5);
  const auto a = run_train(quick_config(f, dir / "a"));
  const auto b = run_train(quick_config(f, dir / "b"));
  CHECK(read_text(a.model_path) == read_text(b.model_path));
  auto other = quick_config(f, dir / "c");
  other.sampler.seed = 4;
  CHECK(read_text(a.model_path) != read_text(run_train(other).model_path));
}

TEST_CASE("prediction input errors") {
  TempDir dir("pred_err");
  const auto f = write_problem(dir, "tr", 30, 6);
  RunConfig pc;
  pc.model = dir / "nope" / "model.json";
  pc.views = {f.a, f.b};
  pc.out = dir / "pred";
  CHECK_THROWS_WITH(run_predict(pc), ContainsSubstring((dir / "nope" / "model.json").string()));

  const auto trained = run_train(quick_config(f, dir / "model"));
  write_text(dir / "wide.csv", "1,2,3,4,5\n1,2,3,4,5\n");
  write_text(dir / "b.csv", "1,2,3\n1,2,3\n");
  pc.model = trained.model_path;
  pc.views = {dir / "wide.csv", dir / "b.csv"};
  CHECK_THROWS_WITH(run_predict(pc), ContainsSubstring("D=4") && ContainsSubstring("D=5"));
  pc.views = {f.a};
  CHECK_THROWS_AS(run_predict(pc), InvalidData);

  RunConfig missing = quick_config(f, dir / "x");
  missing.labels.reset();
  CHECK_THROWS_AS(run_train(missing), InvalidParameter);
}

TEST_CASE("model JSON carries the header and snapshots") {
  TempDir dir("schema");
  const auto f = write_problem(dir, "tr", 30, 7);
  const auto trained = run_train(quick_config(f, dir / "model"));
  const auto j = json::parse(read_text(trained.model_path));
  CHECK(j.contains("version"));
  CHECK(j["seed"].get<std::uint64_t>() == 3);
  CHECK(j["views"].size() == 2);
  CHECK(j["views"][0].contains("mean"));
  CHECK(j["snapshots"].size() == 20);
  const auto& s = j["snapshots"][0];
  CHECK(s.contains("beta"));
  CHECK(s.contains("omegas"));
  CHECK(s["views"][0].contains("W"));
  CHECK(s["views"][0].contains("V"));
  CHECK(s["views"][0].contains("tau"));
  auto broken = j;
  broken["snapshots"][0]["beta"] = json::array({1.0});
  write_text(dir / "broken.json", broken.dump());
  CHECK_THROWS_AS(load_model(dir / "broken.json"), InvalidData);
}
