#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "paircond/errors.hpp"
#include "paircond/grid.hpp"

namespace paircond {

// Reflection-symmetric pair potential V(r), evaluated at |r|.
struct Potential {
  enum class Kind { poschl_teller, square_well, gaussian_well, table };

  Kind kind = Kind::poschl_teller;
  double strength = 2.0;  // poschl_teller: V = -(strength / width^2) sech^2(r / width)
  double width = 1.0;     // poschl_teller, gaussian_well length scale
  double depth = 1.0;     // square_well, gaussian_well
  double radius = 1.0;    // square_well
  std::vector<double> table_r, table_v;

  static Potential poschl_teller_default() { return Potential{}; }

  double operator()(double r) const {
    r = std::abs(r);
    switch (kind) {
      case Kind::poschl_teller: {
        double c = std::cosh(r / width);
        return -strength / (width * width * c * c);
      }
      case Kind::square_well:
        return r < radius ? -depth : 0.0;
      case Kind::gaussian_well:
        return -depth * std::exp(-(r * r) / (width * width));
      case Kind::table: {
        if (r <= table_r.front()) return table_v.front();
        if (r >= table_r.back()) return table_v.back();
        auto it = std::upper_bound(table_r.begin(), table_r.end(), r);
        std::size_t j = static_cast<std::size_t>(it - table_r.begin());
        double t = (r - table_r[j - 1]) / (table_r[j] - table_r[j - 1]);
        return (1 - t) * table_v[j - 1] + t * table_v[j];
      }
    }
    return 0.0;
  }

  double at(const Point3& x, int dim) const {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += x[a] * x[a];
    return (*this)(std::sqrt(s));
  }

  // Closed-form binding energy where one exists (Poschl-Teller in d = 1).
  double poschl_teller_binding() const {
    double nu = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * strength));
    return nu * nu / (width * width);
  }

  nlohmann::json to_json() const {
    switch (kind) {
      case Kind::poschl_teller:
        return {{"kind", "poschl_teller"}, {"strength", strength}, {"width", width}};
      case Kind::square_well:
        return {{"kind", "square_well"}, {"depth", depth}, {"radius", radius}};
      case Kind::gaussian_well:
        return {{"kind", "gaussian_well"}, {"depth", depth}, {"width", width}};
      case Kind::table:
        return {{"kind", "table"}, {"r", table_r}, {"v", table_v}};
    }
    return {};
  }

  static Potential from_json(const nlohmann::json& j) {
    require(j.is_object(), "potential must be a JSON object");
    require(j.contains("kind") && j["kind"].is_string(), "potential needs a string 'kind'");
    const std::string kind = j["kind"];
    Potential p;
    auto allow = [&](std::initializer_list<const char*> keys) {
      for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = it.key() == "kind";
        for (const char* k : keys) ok = ok || it.key() == k;
        require(ok, "potential '" + kind + "': unknown key '" + it.key() + "'");
      }
    };
    auto num = [&](const char* key, double def) {
      if (!j.contains(key)) return def;
      require(j[key].is_number(), std::string("potential: '") + key + "' must be a number");
      return j[key].get<double>();
    };
    if (kind == "poschl_teller") {
      allow({"strength", "width"});
      p.kind = Kind::poschl_teller;
      p.strength = num("strength", 2.0);
      p.width = num("width", 1.0);
      require(p.width > 0, "potential: width must be positive");
    } else if (kind == "square_well") {
      allow({"depth", "radius"});
      p.kind = Kind::square_well;
      p.depth = num("depth", 1.0);
      p.radius = num("radius", 1.0);
      require(p.radius > 0, "potential: radius must be positive");
    } else if (kind == "gaussian_well") {
      allow({"depth", "width"});
      p.kind = Kind::gaussian_well;
      p.depth = num("depth", 1.0);
      p.width = num("width", 1.0);
      require(p.width > 0, "potential: width must be positive");
    } else if (kind == "table") {
      allow({"r", "v"});
      p.kind = Kind::table;
      try {
        p.table_r = j.at("r").get<std::vector<double>>();
        p.table_v = j.at("v").get<std::vector<double>>();
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("potential table: ") + e.what());
      }
      require(p.table_r.size() >= 2 && p.table_r.size() == p.table_v.size(),
              "potential table needs matching r and v arrays of length >= 2");
      for (std::size_t i = 1; i < p.table_r.size(); ++i)
        require(p.table_r[i] > p.table_r[i - 1], "potential table: r must be increasing");
      require(p.table_r.front() >= 0.0, "potential table: r must be nonnegative");
    } else {
      throw UsageError("unknown potential kind '" + kind + "'");
    }
    return p;
  }
};

}  // namespace paircond
