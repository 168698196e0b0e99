#pragma once

// Versioned JSON artifacts for models and reports. Doubles are written with
// round-trip precision, so loading restores parameters bit for bit.

#include <Eigen/Dense>
#include <fstream>
#include <string>

#include "json.hpp"

#include "epf/baselines.hpp"
#include "epf/inference.hpp"
#include "epf/metrics.hpp"
#include "epf/network.hpp"
#include "epf/train.hpp"

namespace epf {

using Json = nlohmann::ordered_json;

inline constexpr int kArtifactVersion = 1;

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (Eigen::Index(data.size()) != rows * cols) throw DataError("matrix payload has wrong length");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

inline Json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

inline Json to_json(const MlpConfig& c) {
  return {{"input_dim", c.input_dim},         {"output_dim", c.output_dim},     {"hidden_layers", c.hidden_layers},
          {"hidden_dim", c.hidden_dim},       {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

inline MlpConfig mlp_config_from_json(const Json& j) {
  MlpConfig c;
  c.input_dim = j.at("input_dim").get<int>();
  c.output_dim = j.at("output_dim").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

inline Json to_json(const Standardizer& s) {
  return {{"feature_mean", vector_to_json(s.feature_mean())},
          {"feature_std", vector_to_json(s.feature_std())},
          {"target_mean", vector_to_json(s.target_mean())},
          {"target_std", vector_to_json(s.target_std())}};
}

inline Standardizer standardizer_from_json(const Json& j) {
  return {vector_from_json(j.at("feature_mean")), vector_from_json(j.at("feature_std")),
          vector_from_json(j.at("target_mean")), vector_from_json(j.at("target_std"))};
}

inline Json to_json(const MlpParams& p) {
  Json layers = Json::array();
  for (const auto& l : p.hidden) layers.push_back({{"weight", matrix_to_json(l.weight)}, {"bias", vector_to_json(l.bias)}});
  return {{"hidden", std::move(layers)},
          {"output", {{"weight", matrix_to_json(p.output.weight)}, {"bias", vector_to_json(p.output.bias)}}}};
}

inline MlpParams mlp_params_from_json(const Json& j) {
  MlpParams p;
  for (const auto& l : j.at("hidden"))
    p.hidden.push_back({matrix_from_json(l.at("weight")), vector_from_json(l.at("bias"))});
  p.output = {matrix_from_json(j.at("output").at("weight")), vector_from_json(j.at("output").at("bias"))};
  return p;
}

inline void check_artifact(const Json& j, const char* kind) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kArtifactVersion)
    throw DataError("unsupported artifact format version");
  if (j.value("kind", std::string{}) != kind) throw DataError(std::string("artifact is not a ") + kind + " model");
}

inline Json to_json(const BnnModel& m) {
  return {{"format_version", kArtifactVersion},
          {"kind", "bnn"},
          {"config", to_json(m.config)},
          {"standardizer", to_json(m.standardizer)},
          {"params", to_json(m.params)}};
}

inline BnnModel bnn_model_from_json(const Json& j) {
  check_artifact(j, "bnn");
  return {mlp_config_from_json(j.at("config")), standardizer_from_json(j.at("standardizer")),
          mlp_params_from_json(j.at("params"))};
}

inline Json to_json(const LearModel& m) {
  Json hours = Json::array();
  for (const auto& h : m.hours)
    hours.push_back({{"intercept", h.intercept},
                     {"lambda", h.lambda},
                     {"coef", vector_to_json(h.coef)},
                     {"residuals", h.residuals}});
  return {{"format_version", kArtifactVersion},
          {"kind", "lear"},
          {"column_mean", vector_to_json(m.column_mean)},
          {"column_scale", vector_to_json(m.column_scale)},
          {"hours", std::move(hours)}};
}

inline LearModel lear_model_from_json(const Json& j) {
  check_artifact(j, "lear");
  LearModel m;
  m.column_mean = vector_from_json(j.at("column_mean"));
  m.column_scale = vector_from_json(j.at("column_scale"));
  const auto& hours = j.at("hours");
  if (hours.size() != kHours) throw DataError("LEAR artifact must hold 24 hours");
  for (std::size_t h = 0; h < kHours; ++h) {
    auto& out = m.hours[h];
    out.intercept = hours[h].at("intercept").get<double>();
    out.lambda = hours[h].at("lambda").get<double>();
    out.coef = vector_from_json(hours[h].at("coef"));
    out.residuals = hours[h].at("residuals").get<std::vector<double>>();
  }
  return m;
}

inline Json to_json(const GarchxModel& m) {
  Json hours = Json::array();
  for (const auto& h : m.hours)
    hours.push_back({{"coef", vector_to_json(h.coef)},
                     {"omega", h.garch.omega},
                     {"alpha", h.garch.alpha},
                     {"beta", h.garch.beta},
                     {"loglik", h.loglik},
                     {"last_residual", h.last_residual},
                     {"last_variance", h.last_variance}});
  return {{"format_version", kArtifactVersion}, {"kind", "garchx"}, {"hours", std::move(hours)}};
}

inline GarchxModel garchx_model_from_json(const Json& j) {
  check_artifact(j, "garchx");
  GarchxModel m;
  const auto& hours = j.at("hours");
  if (hours.size() != kHours) throw DataError("GARCHX artifact must hold 24 hours");
  for (std::size_t h = 0; h < kHours; ++h) {
    auto& out = m.hours[h];
    out.coef = vector_from_json(hours[h].at("coef"));
    out.garch = {hours[h].at("omega").get<double>(), hours[h].at("alpha").get<double>(),
                 hours[h].at("beta").get<double>()};
    out.loglik = hours[h].at("loglik").get<double>();
    out.last_residual = hours[h].at("last_residual").get<double>();
    out.last_variance = hours[h].at("last_variance").get<double>();
  }
  return m;
}

inline Json to_json(const TrainReport& r) {
  return {{"best_val_mse", r.best_val_mse},
          {"epochs_run", r.epochs_run},
          {"best_epoch", r.best_epoch},
          {"train_loss", r.train_loss},
          {"val_mse", r.val_mse}};
}

inline Json to_json(const GridResult& g) {
  Json entries = Json::array();
  for (const auto& e : g.entries) {
    Json j = {{"hidden_dim", e.point.hidden_dim},
              {"hidden_layers", e.point.hidden_layers},
              {"dropout_rate", e.point.dropout_rate},
              {"seed", e.seed}};
    if (e.report) {
      j["val_mse"] = e.report->best_val_mse;
      j["epochs_run"] = e.report->epochs_run;
      j["best_epoch"] = e.report->best_epoch;
    } else {
      j["val_mse"] = nullptr;
      j["failure"] = e.failure;
    }
    entries.push_back(std::move(j));
  }
  return {{"configurations", std::move(entries)},
          {"selected", g.selected},
          {"selected_config", to_json(g.selected_config)}};
}

// NaN becomes null.
inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const MetricValues& v) {
  Json j = Json::object();
  for (const char* name : kMetricNames) j[name] = number_or_null(metric_value(v, name));
  return j;
}

inline Json to_json(const MetricsReport& r) {
  Json per_hour = Json::array();
  for (const auto& h : r.per_hour) per_hour.push_back(to_json(h));
  return {{"model", r.model},
          {"days", r.days},
          {"aggregate", to_json(r.aggregate)},
          {"mape_excluded", r.mape_excluded},
          {"quantile_grid", r.quantile_grid},
          {"mean_quantile_score", r.mean_quantile_score},
          {"per_hour", std::move(per_hour)}};
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError("invalid JSON in " + path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace epf
