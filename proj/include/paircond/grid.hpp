#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "paircond/errors.hpp"

namespace paircond {

using Index3 = std::array<int, 3>;
using Point3 = std::array<double, 3>;

// Uniform lattice over [lower, upper] per axis. Nodes are stored row-major,
// last axis fastest.
class Grid {
 public:
  Grid() = default;

  Grid(std::vector<double> lower, std::vector<double> upper, std::vector<int> n) {
    require(!lower.empty() && lower.size() <= 3, "grid dimension must be 1, 2 or 3");
    require(lower.size() == upper.size() && lower.size() == n.size(),
            "grid bounds and node counts must have equal length");
    dim_ = static_cast<int>(lower.size());
    for (int a = 0; a < 3; ++a) {
      lower_[a] = 0.0;
      upper_[a] = 0.0;
      n_[a] = 1;
      spacing_[a] = 1.0;
    }
    for (int a = 0; a < dim_; ++a) {
      require(n[a] >= 3, "grid needs at least 3 nodes per axis");
      require(std::isfinite(lower[a]) && std::isfinite(upper[a]) && upper[a] > lower[a],
              "grid bounds must be finite with upper > lower");
      lower_[a] = lower[a];
      upper_[a] = upper[a];
      n_[a] = n[a];
      spacing_[a] = (upper[a] - lower[a]) / (n[a] - 1);
    }
  }

  static Grid uniform(int dim, double lower, double upper, int n) {
    return Grid(std::vector<double>(dim, lower), std::vector<double>(dim, upper),
                std::vector<int>(dim, n));
  }

  int dim() const { return dim_; }
  double lower(int a) const { return lower_[a]; }
  double upper(int a) const { return upper_[a]; }
  int n(int a) const { return n_[a]; }
  double spacing(int a) const { return spacing_[a]; }
  std::size_t size() const {
    return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
  }

  double weight() const {
    double w = 1.0;
    for (int a = 0; a < dim_; ++a) w *= spacing_[a];
    return w;
  }

  // Trapezoid weight of node k: weight() halved once per axis on which k
  // sits at the box edge.
  double node_weight(std::size_t k) const {
    Index3 i = unravel(k);
    double w = weight();
    for (int a = 0; a < dim_; ++a)
      if (i[a] == 0 || i[a] == n_[a] - 1) w *= 0.5;
    return w;
  }

  double max_spacing() const {
    double s = 0.0;
    for (int a = 0; a < dim_; ++a) s = std::max(s, spacing_[a]);
    return s;
  }

  double coord(int a, int i) const {
    if (i == n_[a] - 1) return upper_[a];
    return lower_[a] + i * spacing_[a];
  }

  std::size_t index(const Index3& i) const {
    return (static_cast<std::size_t>(i[0]) * n_[1] + i[1]) * n_[2] + i[2];
  }

  Index3 unravel(std::size_t k) const {
    Index3 i{0, 0, 0};
    i[2] = static_cast<int>(k % n_[2]);
    k /= n_[2];
    i[1] = static_cast<int>(k % n_[1]);
    i[0] = static_cast<int>(k / n_[1]);
    return i;
  }

  Point3 point(std::size_t k) const {
    Index3 i = unravel(k);
    Point3 p{0.0, 0.0, 0.0};
    for (int a = 0; a < dim_; ++a) p[a] = coord(a, i[a]);
    return p;
  }

  bool in_range(const Index3& i) const {
    for (int a = 0; a < 3; ++a)
      if (i[a] < 0 || i[a] >= n_[a]) return false;
    return true;
  }

  // Same box, spacing halved: the lattice of midpoints (x + y)/2.
  Grid refined_half() const {
    std::vector<double> lo(dim_), hi(dim_);
    std::vector<int> nn(dim_);
    for (int a = 0; a < dim_; ++a) {
      lo[a] = lower_[a];
      hi[a] = upper_[a];
      nn[a] = 2 * n_[a] - 1;
    }
    return Grid(lo, hi, nn);
  }

  bool operator==(const Grid& o) const {
    return dim_ == o.dim_ && lower_ == o.lower_ && upper_ == o.upper_ && n_ == o.n_;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }

 private:
  int dim_ = 0;
  std::array<double, 3> lower_{};
  std::array<double, 3> upper_{};
  Index3 n_{1, 1, 1};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
};

template <typename T>
struct ScalarField {
  Grid grid;
  std::vector<T> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, T fill = T{}) : grid(g), values(g.size(), fill) {}
  ScalarField(const Grid& g, std::vector<T> v) : grid(g), values(std::move(v)) {
    require(values.size() == grid.size(), "field size does not match grid");
  }

  template <typename F>
  static ScalarField from_function(const Grid& g, F&& f) {
    ScalarField out(g);
    for (std::size_t k = 0; k < g.size(); ++k) out.values[k] = f(g.point(k));
    return out;
  }

  std::size_t size() const { return values.size(); }
  T& operator[](std::size_t k) { return values[k]; }
  const T& operator[](std::size_t k) const { return values[k]; }

  bool finite() const {
    for (const T& v : values)
      if (!std::isfinite(std::abs(v))) return false;
    return true;
  }
};

using RealField = ScalarField<double>;
using ComplexField = ScalarField<std::complex<double>>;

namespace detail {
inline double conj_if(double v) { return v; }
inline std::complex<double> conj_if(std::complex<double> v) { return std::conj(v); }
}  // namespace detail

template <typename T>
T integrate(const ScalarField<T>& f) {
  require(f.values.size() == f.grid.size(), "field size does not match grid");
  T s{};
  for (std::size_t k = 0; k < f.size(); ++k) s += f.values[k] * f.grid.node_weight(k);
  return s;
}

template <typename T>
T inner_product(const ScalarField<T>& f, const ScalarField<T>& g) {
  require(f.grid == g.grid, "inner_product: fields live on different grids");
  T s{};
  for (std::size_t k = 0; k < f.size(); ++k)
    s += detail::conj_if(f.values[k]) * g.values[k] * f.grid.node_weight(k);
  return s;
}

template <typename T>
double l2_norm(const ScalarField<T>& f) {
  return std::sqrt(std::abs(inner_product(f, f)));
}

namespace detail {

template <typename T>
void check_boundary_decay(const ScalarField<T>& f) {
  const Grid& g = f.grid;
  double interior = 0.0, boundary = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    Index3 i = g.unravel(k);
    bool edge = false;
    for (int a = 0; a < g.dim(); ++a)
      if (i[a] == 0 || i[a] == g.n(a) - 1) edge = true;
    double v = std::abs(f.values[k]);
    (edge ? boundary : interior) = std::max(edge ? boundary : interior, v);
  }
  if (interior > 0.0 && boundary >= 1e-6 * interior)
    warn("fourier_samples: field does not decay at the box boundary");
}

}  // namespace detail

// f^(p) = sum_x e^{-i p.x} f(x) w.
template <typename T>
std::vector<std::complex<double>> fourier_samples(const ScalarField<T>& f,
                                                  const std::vector<Point3>& momenta) {
  detail::check_boundary_decay(f);
  const Grid& g = f.grid;
  std::vector<std::size_t> support;
  for (std::size_t k = 0; k < g.size(); ++k)
    if (f.values[k] != T{}) support.push_back(k);
  std::vector<std::complex<double>> out(momenta.size());
  for (std::size_t m = 0; m < momenta.size(); ++m) {
    std::complex<double> s = 0.0;
    for (std::size_t k : support) {
      Point3 x = g.point(k);
      double phase = 0.0;
      for (int a = 0; a < g.dim(); ++a) phase += momenta[m][a] * x[a];
      s += std::polar(1.0, -phase) * std::complex<double>(f.values[k]);
    }
    out[m] = s * g.weight();
  }
  return out;
}

// Fourier transform of a real field on the tensor product of 1D momentum
// axes, evaluated separably. Returns values row-major over the momentum grid.
inline std::vector<std::complex<double>> fourier_tensor(const RealField& f,
                                                        const std::vector<double>& p_axis) {
  detail::check_boundary_decay(f);
  const Grid& g = f.grid;
  const int d = g.dim();
  require(d == 1 || d == 2, "fourier_tensor supports d = 1, 2");
  const std::size_t np = p_axis.size();
  auto phases = [&](int a) {
    std::vector<std::complex<double>> e(np * g.n(a));
    for (std::size_t m = 0; m < np; ++m)
      for (int i = 0; i < g.n(a); ++i) e[m * g.n(a) + i] = std::polar(1.0, -p_axis[m] * g.coord(a, i));
    return e;
  };
  if (d == 1) {
    auto e = phases(0);
    std::vector<std::complex<double>> out(np);
    for (std::size_t m = 0; m < np; ++m) {
      std::complex<double> s = 0.0;
      for (int i = 0; i < g.n(0); ++i)
        if (f.values[i] != 0.0) s += e[m * g.n(0) + i] * f.values[i];
      out[m] = s * g.weight();
    }
    return out;
  }
  auto ex = phases(0);
  auto ey = phases(1);
  const int nx = g.n(0), ny = g.n(1);
  // First contract along y: tmp[i][m] = sum_j f[i][j] e_y[m][j].
  std::vector<std::complex<double>> tmp(static_cast<std::size_t>(nx) * np);
  for (int i = 0; i < nx; ++i)
    for (std::size_t m = 0; m < np; ++m) {
      std::complex<double> s = 0.0;
      for (int j = 0; j < ny; ++j) {
        double v = f.values[static_cast<std::size_t>(i) * ny + j];
        if (v != 0.0) s += ey[m * ny + j] * v;
      }
      tmp[static_cast<std::size_t>(i) * np + m] = s;
    }
  std::vector<std::complex<double>> out(np * np);
  for (std::size_t mx = 0; mx < np; ++mx)
    for (std::size_t my = 0; my < np; ++my) {
      std::complex<double> s = 0.0;
      for (int i = 0; i < nx; ++i) s += ex[mx * nx + i] * tmp[static_cast<std::size_t>(i) * np + my];
      out[mx * np + my] = s * g.weight();
    }
  return out;
}

}  // namespace paircond
