#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "paircond/grid.hpp"

namespace paircond {

namespace detail {

// Exact squared Euclidean distance to the nearest feature node, by the
// separable lower-envelope transform. f holds 0 at features and +inf elsewhere.
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, double h,
                   std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    auto meet = [&](int p) {
      return ((f[q] + h * h * q * q) - (f[p] + h * h * p * p)) / (2.0 * h * h * (q - p));
    };
    double s = meet(v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = h * (q - v[j]);
    d[q] = dq * dq + f[v[j]];
  }
}

// Squared distance from every node to the nearest node with feature[k] != 0.
inline std::vector<double> squared_edt(const Grid& g, const std::vector<std::uint8_t>& feature) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d2(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) d2[k] = feature[k] ? 0.0 : inf;
  for (int a = 0; a < g.dim(); ++a) {
    const int n = g.n(a);
    std::vector<double> f(n), out(n), z(n + 1);
    std::vector<int> v(n);
    Index3 stride{g.n(1) * g.n(2), g.n(2), 1};
    for (std::size_t k = 0; k < g.size(); ++k) {
      Index3 i = g.unravel(k);
      if (i[a] != 0) continue;
      for (int q = 0; q < n; ++q) f[q] = d2[k + static_cast<std::size_t>(q) * stride[a]];
      edt_1d(f, out, g.spacing(a), v, z);
      for (int q = 0; q < n; ++q) d2[k + static_cast<std::size_t>(q) * stride[a]] = out[q];
    }
  }
  return d2;
}

}  // namespace detail

enum class DistanceMethod { exact_transform, brute_force };

// Interior indicator on a grid, with the cached distance from each node to
// the nearest outside node center (0 on outside nodes).
class DomainMask {
 public:
  DomainMask() = default;

  DomainMask(const Grid& grid, std::vector<std::uint8_t> inside,
             std::optional<bool> convex_hint = std::nullopt)
      : grid_(grid), inside_(std::move(inside)), convex_hint_(convex_hint) {
    require(inside_.size() == grid_.size(), "mask size does not match grid");
    for (std::size_t k = 0; k < inside_.size(); ++k) {
      inside_[k] = inside_[k] ? 1 : 0;
      if (inside_[k]) nodes_.push_back(k);
    }
    dist_.assign(grid_.size(), 0.0);
    if (!nodes_.empty() && nodes_.size() < grid_.size()) {
      std::vector<std::uint8_t> outside(grid_.size());
      for (std::size_t k = 0; k < grid_.size(); ++k) outside[k] = !inside_[k];
      auto d2 = detail::squared_edt(grid_, outside);
      for (std::size_t k = 0; k < grid_.size(); ++k) dist_[k] = inside_[k] ? std::sqrt(d2[k]) : 0.0;
    }
  }

  const Grid& grid() const { return grid_; }
  bool inside(std::size_t k) const { return inside_[k] != 0; }
  const std::vector<std::uint8_t>& inside_flags() const { return inside_; }
  double dist(std::size_t k) const { return dist_[k]; }
  const std::vector<double>& dist_values() const { return dist_; }
  // Flat indices of inside nodes in ascending order.
  const std::vector<std::size_t>& nodes() const { return nodes_; }
  std::size_t count() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::optional<bool> convex_hint() const { return convex_hint_; }

  bool operator==(const DomainMask& o) const { return grid_ == o.grid_ && inside_ == o.inside_; }

  // Position of each grid node in nodes(), or -1 for outside nodes.
  std::vector<long> node_map() const {
    std::vector<long> m(grid_.size(), -1);
    for (std::size_t c = 0; c < nodes_.size(); ++c) m[nodes_[c]] = static_cast<long>(c);
    return m;
  }

 private:
  Grid grid_;
  std::vector<std::uint8_t> inside_;
  std::vector<double> dist_;
  std::vector<std::size_t> nodes_;
  std::optional<bool> convex_hint_;
};

inline RealField distance_field(const DomainMask& mask,
                                DistanceMethod method = DistanceMethod::exact_transform) {
  const Grid& g = mask.grid();
  require(!mask.empty() && mask.count() < g.size(),
          "distance_field needs at least one inside and one outside node");
  RealField out(g, 0.0);
  if (method == DistanceMethod::exact_transform) {
    out.values = mask.dist_values();
    return out;
  }
  std::vector<Point3> outside;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (!mask.inside(k)) outside.push_back(g.point(k));
  for (std::size_t k : mask.nodes()) {
    Point3 x = g.point(k);
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& y : outside) {
      double s = 0.0;
      for (int a = 0; a < g.dim(); ++a) s += (x[a] - y[a]) * (x[a] - y[a]);
      best = std::min(best, s);
    }
    out.values[k] = std::sqrt(best);
  }
  return out;
}

// Nodes at distance > ell from the complement.
inline DomainMask erode(const DomainMask& mask, double ell) {
  require(ell >= 0.0, "erode: ell must be nonnegative");
  if (ell == 0.0) return mask;
  std::vector<std::uint8_t> in(mask.grid().size(), 0);
  for (std::size_t k : mask.nodes()) in[k] = mask.dist(k) > ell;
  return DomainMask(mask.grid(), std::move(in), mask.convex_hint());
}

// The mask together with nodes at distance < ell from the domain, whose edge
// is taken half a spacing beyond the outermost inside node.
inline DomainMask dilate(const DomainMask& mask, double ell) {
  require(ell >= 0.0, "dilate: ell must be nonnegative");
  if (ell == 0.0) return mask;
  const Grid& g = mask.grid();
  require(!mask.empty(), "dilate: empty mask");
  const double margin = ell + 2.0 * g.max_spacing();
  for (std::size_t k : mask.nodes()) {
    Point3 x = g.point(k);
    for (int a = 0; a < g.dim(); ++a)
      if (x[a] - g.lower(a) < margin || g.upper(a) - x[a] < margin)
        throw UsageError("dilate: result does not fit the bounding box (need margin >= ell + 2 dx)");
  }
  auto d2 = detail::squared_edt(g, mask.inside_flags());
  std::vector<std::uint8_t> in(g.size(), 0);
  const double reach = ell + 0.5 * g.max_spacing();
  for (std::size_t k = 0; k < g.size(); ++k) in[k] = mask.inside(k) || std::sqrt(d2[k]) < reach;
  return DomainMask(g, std::move(in), mask.convex_hint());
}

// Index-sum set {i + j : i, j inside} on the doubled lattice (2n - 1 per axis).
inline std::vector<std::uint8_t> index_sum_set(const DomainMask& mask) {
  const Grid& g = mask.grid();
  const Grid h = g.refined_half();
  std::vector<std::uint8_t> s(h.size(), 0);
  const auto& nodes = mask.nodes();
  if (g.dim() == 1) {
    for (std::size_t a : nodes)
      for (std::size_t b : nodes) s[a + b] = 1;
    return s;
  }
  // Row-wise bitsets along the last axis for d >= 2.
  const int nl = h.n(g.dim() - 1);
  const int words = (nl + 63) / 64;
  std::size_t rows = h.size() / nl;
  std::vector<std::uint64_t> bits(rows * words, 0);
  // Rows of the original mask as bitsets.
  const int ng = g.n(g.dim() - 1);
  std::size_t grow = g.size() / ng;
  std::vector<std::vector<int>> row_members(grow);
  for (std::size_t k : nodes) row_members[k / ng].push_back(static_cast<int>(k % ng));
  auto row_index_half = [&](std::size_t ra, std::size_t rb) {
    // Map two original row ids to the doubled-lattice row id.
    Index3 ia = g.unravel(ra * ng), ib = g.unravel(rb * ng);
    Index3 ic{0, 0, 0};
    for (int a = 0; a < g.dim() - 1; ++a) ic[a] = ia[a] + ib[a];
    return h.index(ic) / nl;
  };
  std::vector<std::size_t> nonempty;
  for (std::size_t r = 0; r < grow; ++r)
    if (!row_members[r].empty()) nonempty.push_back(r);
  for (std::size_t ra : nonempty)
    for (std::size_t rb : nonempty) {
      std::uint64_t* dst = &bits[row_index_half(ra, rb) * words];
      for (int ia : row_members[ra])
        for (int ib : row_members[rb]) {
          int c = ia + ib;
          dst[c / 64] |= (std::uint64_t{1} << (c % 64));
        }
    }
  for (std::size_t r = 0; r < rows; ++r)
    for (int c = 0; c < nl; ++c)
      if (bits[r * words + c / 64] >> (c % 64) & 1u) s[r * nl + c] = 1;
  return s;
}

// Mask on the midpoint lattice: X inside iff X = (x + y)/2 for inside x, y.
inline DomainMask center_of_mass_mask(const DomainMask& mask) {
  require(!mask.empty(), "center_of_mass_mask: empty mask");
  return DomainMask(mask.grid().refined_half(), index_sum_set(mask), mask.convex_hint());
}

// (Omega + Omega)/2 on the same grid: node X is inside iff some midpoint
// (x + y)/2 of inside nodes lies within half a spacing of X on every axis.
inline DomainMask minkowski_average(const DomainMask& mask) {
  require(!mask.empty(), "minkowski_average: empty mask");
  const Grid& g = mask.grid();
  const Grid h = g.refined_half();
  auto s = index_sum_set(mask);
  std::vector<std::uint8_t> in(g.size(), 0);
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!s[k]) continue;
    Index3 c = h.unravel(k);
    // Each odd component rounds both down and up.
    Index3 lo{0, 0, 0}, hi{0, 0, 0};
    for (int a = 0; a < g.dim(); ++a) {
      lo[a] = c[a] / 2;
      hi[a] = (c[a] + 1) / 2;
    }
    Index3 i{0, 0, 0};
    for (i[0] = lo[0]; i[0] <= hi[0]; ++i[0])
      for (i[1] = lo[1]; i[1] <= hi[1]; ++i[1])
        for (i[2] = lo[2]; i[2] <= hi[2]; ++i[2]) in[g.index(i)] = 1;
  }
  return DomainMask(g, std::move(in), mask.convex_hint());
}

inline RealField cutoff_eta(const DomainMask& mask, double ell) {
  require(ell > 0.0 && ell < 1.0, "cutoff_eta: ell must lie in (0, 1)");
  RealField eta(mask.grid(), 0.0);
  for (std::size_t k : mask.nodes()) {
    double d = mask.dist(k);
    eta.values[k] = d <= ell ? 0.0 : (d >= 2.0 * ell ? 1.0 : (d - ell) / ell);
  }
  return eta;
}

// ---- built-in domains (node-center membership, open sets) ----

template <typename Pred>
DomainMask mask_from_predicate(const Grid& g, Pred&& pred, std::optional<bool> convex = std::nullopt) {
  std::vector<std::uint8_t> in(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) in[k] = pred(g.point(k)) ? 1 : 0;
  DomainMask m(g, std::move(in), convex);
  require(!m.empty(), "domain contains no grid nodes");
  return m;
}

inline DomainMask interval_mask(const Grid& g, double a, double b) {
  require(g.dim() == 1, "interval_mask needs a 1D grid");
  require(b > a, "interval_mask: empty interval");
  return mask_from_predicate(g, [&](const Point3& x) { return x[0] > a && x[0] < b; }, true);
}

inline DomainMask intervals_mask(const Grid& g, const std::vector<std::pair<double, double>>& iv) {
  require(g.dim() == 1, "intervals_mask needs a 1D grid");
  return mask_from_predicate(
      g,
      [&](const Point3& x) {
        for (auto [a, b] : iv)
          if (x[0] > a && x[0] < b) return true;
        return false;
      },
      iv.size() == 1);
}

inline DomainMask box_mask(const Grid& g, const std::vector<double>& lo, const std::vector<double>& hi) {
  require(static_cast<int>(lo.size()) == g.dim() && static_cast<int>(hi.size()) == g.dim(),
          "box_mask: bounds must match the grid dimension");
  return mask_from_predicate(
      g,
      [&](const Point3& x) {
        for (int a = 0; a < g.dim(); ++a)
          if (!(x[a] > lo[a] && x[a] < hi[a])) return false;
        return true;
      },
      true);
}

inline DomainMask disk_mask(const Grid& g, const std::vector<double>& center, double radius) {
  require(g.dim() == 2 && center.size() == 2, "disk_mask needs a 2D grid");
  require(radius > 0.0, "disk_mask: radius must be positive");
  return mask_from_predicate(
      g,
      [&](const Point3& x) {
        double dx = x[0] - center[0], dy = x[1] - center[1];
        return dx * dx + dy * dy < radius * radius;
      },
      true);
}

// [-1,1]^2 without the quadrant [0,1) x [0,1).
inline DomainMask l_shape_mask(const Grid& g) {
  require(g.dim() == 2, "l_shape_mask needs a 2D grid");
  return mask_from_predicate(
      g,
      [](const Point3& x) {
        bool sq = std::abs(x[0]) < 1.0 && std::abs(x[1]) < 1.0;
        return sq && !(x[0] >= 0.0 && x[1] >= 0.0);
      },
      false);
}

// [-1,1]^2 minus the slit (-1,0] x {0}, one node row wide.
inline DomainMask slit_square_mask(const Grid& g) {
  require(g.dim() == 2, "slit_square_mask needs a 2D grid");
  const double half = 0.5 * g.spacing(1);
  bool row = false;
  for (int j = 0; j < g.n(1); ++j)
    if (std::abs(g.coord(1, j)) < half) row = true;
  require(row, "slit_square_mask: grid must have a node row near y = 0");
  return mask_from_predicate(
      g,
      [half](const Point3& x) {
        bool sq = std::abs(x[0]) < 1.0 && std::abs(x[1]) < 1.0;
        bool slit = x[0] <= 0.0 && std::abs(x[1]) < half;
        return sq && !slit;
      },
      false);
}

// ---- JSON import/export; inside as [[bit, run], ...] ----

inline nlohmann::json mask_to_json(const DomainMask& m) {
  const Grid& g = m.grid();
  nlohmann::json j;
  j["dim"] = g.dim();
  for (int a = 0; a < g.dim(); ++a) {
    j["lower"].push_back(g.lower(a));
    j["upper"].push_back(g.upper(a));
    j["n"].push_back(g.n(a));
  }
  nlohmann::json runs = nlohmann::json::array();
  const auto& f = m.inside_flags();
  std::size_t k = 0;
  while (k < f.size()) {
    std::size_t e = k;
    while (e < f.size() && f[e] == f[k]) ++e;
    runs.push_back({static_cast<int>(f[k]), e - k});
    k = e;
  }
  j["inside"] = runs;
  if (m.convex_hint()) j["convex"] = *m.convex_hint();
  return j;
}

inline DomainMask mask_from_json(const nlohmann::json& j) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key != "dim" && key != "lower" && key != "upper" && key != "n" && key != "inside" && key != "convex")
      throw UsageError("mask json: unknown key '" + key + "'");
  }
  try {
    int dim = j.at("dim").get<int>();
    auto lo = j.at("lower").get<std::vector<double>>();
    auto hi = j.at("upper").get<std::vector<double>>();
    auto n = j.at("n").get<std::vector<int>>();
    require(static_cast<int>(lo.size()) == dim, "mask json: dim does not match bounds");
    Grid g(lo, hi, n);
    std::vector<std::uint8_t> in;
    in.reserve(g.size());
    for (const auto& run : j.at("inside")) {
      int bit = run.at(0).get<int>();
      std::size_t len = run.at(1).get<std::size_t>();
      require(bit == 0 || bit == 1, "mask json: bits must be 0 or 1");
      require(in.size() + len <= g.size(), "mask json: runs exceed grid size");
      in.insert(in.end(), len, static_cast<std::uint8_t>(bit));
    }
    require(in.size() == g.size(), "mask json: runs do not cover the grid");
    std::optional<bool> convex;
    if (j.contains("convex")) convex = j["convex"].get<bool>();
    return DomainMask(g, std::move(in), convex);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("mask json: ") + e.what());
  }
}

inline DomainMask load_mask(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open mask file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("mask file " + path + ": " + e.what());
  }
  return mask_from_json(j);
}

}  // namespace paircond
