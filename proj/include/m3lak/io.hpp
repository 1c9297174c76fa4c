#pragma once

// Dataset ingestion (CSV views, label files), feature standardization and the JSON
// model format.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "m3lak/error.hpp"
#include "m3lak/multiview_lvm.hpp"
#include "m3lak/sampler.hpp"

namespace m3lak {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidData("cannot open " + path.string());
  return in;
}

inline bool parse_double(const std::string& token, double& out) {
  if (token.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(token, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == token.size() && std::isfinite(out);
}

}  // namespace detail

/// CSV without header: one row per instance, one column per feature. Returns N x D.
inline MatrixXd read_csv_matrix(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      double value = 0.0;
      const auto token = detail::trim(cell);
      if (!detail::parse_double(token, value))
        throw InvalidData(path.string() + ": row " + std::to_string(line_no) + ", column " + std::to_string(col) +
                          ": '" + token + "' is not a number");
      row.push_back(value);
    }
    if (!line.empty() && line.back() == ',')
      throw InvalidData(path.string() + ": row " + std::to_string(line_no) + " ends with an empty cell");
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidData(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                        " columns, expected " + std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidData(path.string() + ": no data rows");
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

/// One label per line, each +1 (or 1) or -1.
inline VectorXd read_labels(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<double> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto token = detail::trim(line);
    if (token.empty()) continue;
    if (token == "1" || token == "+1") labels.push_back(1.0);
    else if (token == "-1") labels.push_back(-1.0);
    else
      throw InvalidData(path.string() + ": line " + std::to_string(line_no) + ": label '" + token +
                        "' is not +1 or -1");
  }
  return Eigen::Map<VectorXd>(labels.data(), static_cast<Eigen::Index>(labels.size()));
}

inline MultiViewDataset ingest(const std::vector<fs::path>& view_paths, const std::optional<fs::path>& label_path) {
  if (view_paths.empty()) throw InvalidData("no view files given");
  MultiViewDataset data;
  Eigen::Index rows = -1;
  for (const auto& path : view_paths) {
    MatrixXd x = read_csv_matrix(path);
    if (rows >= 0 && x.rows() != rows)
      throw InvalidData("row count mismatch: " + view_paths.front().string() + " has " + std::to_string(rows) +
                        " rows but " + path.string() + " has " + std::to_string(x.rows()));
    rows = x.rows();
    data.views.push_back(x.transpose());
  }
  if (label_path) {
    VectorXd y = read_labels(*label_path);
    if (y.size() != rows)
      throw InvalidData("row count mismatch: " + view_paths.front().string() + " has " + std::to_string(rows) +
                        " rows but " + label_path->string() + " has " + std::to_string(y.size()) + " labels");
    data.labels = std::move(y);
  }
  data.validate();
  return data;
}

inline void write_csv_matrix(const fs::path& path, const MatrixXd& rows_by_cols) {
  std::ofstream out(path);
  if (!out) throw InvalidData("cannot write " + path.string());
  out.precision(17);
  for (Eigen::Index r = 0; r < rows_by_cols.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows_by_cols.cols(); ++c) out << (c ? "," : "") << rows_by_cols(r, c);
    out << '\n';
  }
}

inline void write_labels(const fs::path& path, const VectorXd& y) {
  std::ofstream out(path);
  if (!out) throw InvalidData("cannot write " + path.string());
  for (Eigen::Index k = 0; k < y.size(); ++k) out << (y[k] > 0 ? "1" : "-1") << '\n';
}

// ---------------------------------------------------------------------------
// Standardization

/// Per-feature affine map x -> (x - mean) / scale, fitted on training data.
struct Standardization {
  bool enabled = false;
  std::vector<VectorXd> mean;
  std::vector<VectorXd> scale;

  static Standardization fit(const MultiViewDataset& data) {
    Standardization s;
    s.enabled = true;
    for (const auto& x : data.views) {
      const VectorXd mu = x.rowwise().mean();
      VectorXd sd = ((x.colwise() - mu).array().square().rowwise().mean()).sqrt().matrix();
      for (Eigen::Index d = 0; d < sd.size(); ++d)
        if (!(sd[d] > 0.0)) sd[d] = 1.0;
      s.mean.push_back(mu);
      s.scale.push_back(sd);
    }
    return s;
  }

  std::vector<MatrixXd> apply(const std::vector<MatrixXd>& views) const {
    if (!enabled) return views;
    if (views.size() != mean.size()) throw InvalidData("standardization: view count differs from the model");
    std::vector<MatrixXd> out;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (views[i].rows() != mean[i].size())
        throw InvalidData("standardization: view " + std::to_string(i) + " expected D=" +
                          std::to_string(mean[i].size()) + ", got D=" + std::to_string(views[i].rows()));
      out.push_back(((views[i].colwise() - mean[i]).array().colwise() / scale[i].array()).matrix());
    }
    return out;
  }

  MultiViewDataset apply(const MultiViewDataset& data) const {
    MultiViewDataset out;
    out.views = apply(data.views);
    out.labels = data.labels;
    return out;
  }
};

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline json matrix_rows(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_array(const VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

inline MatrixXd rows_matrix(const json& j, Eigen::Index expected_cols) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  MatrixXd m(rows, expected_cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != expected_cols) throw InvalidData("model file: ragged matrix");
    for (Eigen::Index c = 0; c < expected_cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline VectorXd array_vector(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = j.at(static_cast<std::size_t>(k)).get<double>();
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model file

struct ModelFile {
  PosteriorSamples samples;
  Standardization standardization;
  std::uint64_t seed = 0;
  Hyperparameters hyper;
};

inline json hyper_to_json(const Hyperparameters& h) {
  return {{"m", h.m},         {"M", h.M},         {"K", h.K},         {"eta", h.eta},
          {"alpha", h.alpha}, {"C", h.C},         {"v", h.v},         {"a_r", h.a_r},
          {"b_r", h.b_r},     {"a_tau", h.a_tau}, {"b_tau", h.b_tau}};
}

inline json model_to_json(const ModelFile& model) {
  const auto& s = model.samples;
  json views = json::array();
  for (std::size_t i = 0; i < s.feature_dims().size(); ++i) {
    json v = {{"D", s.feature_dims()[i]}, {"K", s.private_dims()[i]}};
    if (model.standardization.enabled) {
      v["mean"] = detail::vector_array(model.standardization.mean[i]);
      v["scale"] = detail::vector_array(model.standardization.scale[i]);
    }
    views.push_back(std::move(v));
  }
  json snaps = json::array();
  for (const auto& snap : s.snapshots()) {
    json sv = json::array();
    for (const auto& v : snap.views)
      sv.push_back({{"W", detail::matrix_rows(v.W)}, {"V", detail::matrix_rows(v.V)}, {"tau", v.tau}});
    json comps = json::array();
    for (std::size_t k = 0; k < snap.component_means.size(); ++k)
      comps.push_back({{"weight", snap.component_weights[static_cast<Eigen::Index>(k)]},
                       {"mean", detail::vector_array(snap.component_means[k])},
                       {"covariance", detail::matrix_rows(snap.component_covariances[k])}});
    snaps.push_back({{"iteration", snap.iteration},
                     {"views", std::move(sv)},
                     {"omegas", detail::matrix_rows(snap.omegas.transpose())},
                     {"beta", detail::vector_array(snap.beta)},
                     {"mixture", {{"components", std::move(comps)}, {"remainder", snap.remainder}}}});
  }
  return {{"format", "m3lak-model"},
          {"version", kModelFormatVersion},
          {"seed", model.seed},
          {"m", s.latent_dim()},
          {"M", s.num_frequencies()},
          {"standardized", model.standardization.enabled},
          {"views", std::move(views)},
          {"hyperparameters", hyper_to_json(model.hyper)},
          {"snapshots", std::move(snaps)}};
}

inline ModelFile model_from_json(const json& j) {
  try {
    if (j.at("format") != "m3lak-model") throw InvalidData("model file: unknown format");
    if (j.at("version").get<int>() != kModelFormatVersion) throw InvalidData("model file: unsupported version");
    ModelFile model;
    model.seed = j.at("seed").get<std::uint64_t>();
    const auto m = j.at("m").get<Eigen::Index>();
    const auto big_m = j.at("M").get<Eigen::Index>();
    std::vector<Eigen::Index> dims, ks;
    model.standardization.enabled = j.at("standardized").get<bool>();
    for (const auto& v : j.at("views")) {
      dims.push_back(v.at("D").get<Eigen::Index>());
      ks.push_back(v.at("K").get<Eigen::Index>());
      if (model.standardization.enabled) {
        model.standardization.mean.push_back(detail::array_vector(v.at("mean")));
        model.standardization.scale.push_back(detail::array_vector(v.at("scale")));
      }
    }
    const auto& h = j.at("hyperparameters");
    auto& hp = model.hyper;
    hp.m = h.at("m");
    hp.M = h.at("M");
    hp.K = h.at("K").get<std::vector<Eigen::Index>>();
    hp.eta = h.at("eta");
    hp.alpha = h.at("alpha");
    hp.C = h.at("C");
    hp.v = h.at("v");
    hp.a_r = h.at("a_r");
    hp.b_r = h.at("b_r");
    hp.a_tau = h.at("a_tau");
    hp.b_tau = h.at("b_tau");
    model.samples = PosteriorSamples(m, big_m, dims, ks);
    for (const auto& js : j.at("snapshots")) {
      Snapshot snap;
      snap.iteration = js.at("iteration");
      const auto& sv = js.at("views");
      for (std::size_t i = 0; i < sv.size(); ++i)
        snap.views.push_back({detail::rows_matrix(sv[i].at("W"), m), detail::rows_matrix(sv[i].at("V"), ks.at(i)),
                              sv[i].at("tau").get<double>()});
      snap.omegas = detail::rows_matrix(js.at("omegas"), m).transpose();
      snap.beta = detail::array_vector(js.at("beta"));
      const auto& comps = js.at("mixture").at("components");
      snap.component_weights.resize(static_cast<Eigen::Index>(comps.size()));
      for (std::size_t k = 0; k < comps.size(); ++k) {
        snap.component_weights[static_cast<Eigen::Index>(k)] = comps[k].at("weight");
        snap.component_means.push_back(detail::array_vector(comps[k].at("mean")));
        snap.component_covariances.push_back(detail::rows_matrix(comps[k].at("covariance"), m));
      }
      snap.remainder = js.at("mixture").at("remainder");
      model.samples.append(std::move(snap));
    }
    return model;
  } catch (const json::exception& e) {
    throw InvalidData(std::string("model file: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw InvalidData(std::string("model file: ") + e.what());
  }
}

inline void save_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InvalidData("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

inline json load_json(const fs::path& path) {
  auto in = detail::open_input(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidData(path.string() + ": " + e.what());
  }
}

inline void save_model(const fs::path& path, const ModelFile& model) { save_json(path, model_to_json(model)); }

inline ModelFile load_model(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidData("model file not found: " + path.string());
  try {
    return model_from_json(load_json(path));
  } catch (const InvalidData& e) {
    throw InvalidData(path.string() + ": " + e.what());
  }
}

}  // namespace m3lak
