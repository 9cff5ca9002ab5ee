#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "paircond/errors.hpp"

namespace paircond {

enum class FitModel { loglog, linear };

struct PowerLawFit {
  FitModel model = FitModel::loglog;
  double exponent = 0.0;   // slope (log-log) or slope (linear)
  double prefactor = 0.0;  // e^{intercept} (log-log) or intercept (linear)
  double rms_residual = 0.0;
  bool refused = false;
  int points = 0;

  nlohmann::json to_json() const {
    return {{"model", model == FitModel::loglog ? "loglog" : "linear"},
            {"exponent", exponent},
            {"prefactor", prefactor},
            {"rms_residual", rms_residual},
            {"refused", refused},
            {"points", points}};
  }
};

// Ordinary least squares of y = prefactor * x^exponent (log-log) or
// y = prefactor + exponent * x (linear).
inline PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y,
                                 FitModel model = FitModel::loglog) {
  require(x.size() == y.size(), "fit_power_law: x and y differ in length");
  require(x.size() >= 3, "fit_power_law: need at least 3 rows");
  std::vector<double> u(x), v(y);
  if (model == FitModel::loglog) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      require(x[i] > 0.0 && y[i] > 0.0, "fit_power_law: log-log model needs positive data");
      u[i] = std::log(x[i]);
      v[i] = std::log(y[i]);
    }
  }
  const double n = static_cast<double>(u.size());
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
  const double mv = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    sxx += (u[i] - mu) * (u[i] - mu);
    sxy += (u[i] - mu) * (v[i] - mv);
    syy += (v[i] - mv) * (v[i] - mv);
  }
  require(sxx > 1e-300 * (1.0 + mu * mu), "fit_power_law: control has zero variance");
  PowerLawFit f;
  f.model = model;
  f.points = static_cast<int>(u.size());
  f.exponent = sxy / sxx;
  const double icpt = mv - f.exponent * mu;
  f.prefactor = model == FitModel::loglog ? std::exp(icpt) : icpt;
  double rss = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) rss += std::pow(v[i] - (icpt + f.exponent * u[i]), 2);
  f.rms_residual = std::sqrt(rss / n);
  const double scale = std::max(std::abs(mv), 1.0);
  const bool flat = syy <= 1e-24 * scale * scale * n;
  f.refused = flat || (model == FitModel::loglog && f.rms_residual > 0.2);
  return f;
}

// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

struct ScanReport {
  std::vector<std::string> columns;  // columns[0] is the control parameter
  std::vector<std::vector<double>> rows;
  std::map<std::string, PowerLawFit> fits;
  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();

  void add_row(std::vector<double> row) {
    require(row.size() == columns.size(), "scan row width does not match the columns");
    rows.push_back(std::move(row));
  }

  void sort_rows() {
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  }

  std::vector<double> column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    require(it != columns.end(), "scan report has no column '" + name + "'");
    std::size_t c = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }

  std::string to_csv() const {
    std::ostringstream os;
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_double(r[c]);
      os << '\n';
    }
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["columns"] = columns;
    j["rows"] = rows;
    j["fits"] = nlohmann::json::object();
    for (const auto& [k, f] : fits) j["fits"][k] = f.to_json();
    j["summary"] = summary;
    j["metadata"] = metadata;
    return j;
  }
};

}  // namespace paircond
