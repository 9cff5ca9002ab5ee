#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "paircond/potential.hpp"
#include "paircond/spectral.hpp"

namespace paircond {

struct RelativeGroundState {
  double E_b = 0.0;
  RealField alpha_star;  // on [-L, L]^d, unit L2 norm, positive
  double rho_star = std::numeric_limits<double>::quiet_NaN();
  double g_bcs = std::numeric_limits<double>::quiet_NaN();
  double g_0 = std::numeric_limits<double>::quiet_NaN();
  double L = 0.0;
  double residual = 0.0;
  int iterations = 0;
  Potential V;

  int dim() const { return alpha_star.grid.dim(); }
  double spacing() const { return alpha_star.grid.spacing(0); }
};

struct RelativeOptions {
  double tol = 1e-10;
  bool fit_decay = true;
  bool couplings = true;
  double p_max = 0.0;  // 0: min(20, pi / ds)
  int n_p = 512;
};

struct Couplings {
  double g_bcs = 0.0;
  double g_0 = 0.0;
};

// Interior of the box [-L, L]^d with the potential sampled at the nodes.
inline StencilOperator relative_operator(const Potential& V, const Grid& g) {
  std::vector<double> lo(g.dim()), hi(g.dim());
  for (int a = 0; a < g.dim(); ++a) {
    lo[a] = g.lower(a);
    hi[a] = g.upper(a);
  }
  DomainMask m = box_mask(g, lo, hi);
  RealField pot = RealField::from_function(g, [&](const Point3& x) { return V.at(x, g.dim()); });
  return assemble_dirichlet(m, -1.0, std::move(pot));
}

inline double fit_decay_rate(const RelativeGroundState& gs);
inline Couplings compute_couplings(const RealField& a, double E_b, double p_max = 0.0, int n_p = 512);

inline RelativeGroundState solve_relative(const Potential& V, double L, int n, int dim = 1,
                                          const RelativeOptions& opt = {}) {
  require(L > 0.0, "solve_relative: L must be positive");
  require(dim == 1 || dim == 2, "solve_relative: d must be 1 or 2");
  Grid g = Grid::uniform(dim, -L, L, n);
  StencilOperator A = relative_operator(V, g);
  EigenResult r = smallest_eigenpair(A, opt.tol);
  if (r.eigenvalue >= 0.0)
    throw UsageError("no bound state: -Laplacian + V has smallest eigenvalue " +
                     std::to_string(r.eigenvalue) + " >= 0");
  RelativeGroundState gs;
  gs.E_b = -r.eigenvalue;
  gs.alpha_star = std::move(r.eigenvector);
  gs.L = L;
  gs.residual = r.residual;
  gs.iterations = r.iterations;
  gs.V = V;
  double amax = 0.0, edge = 0.0;
  const double h = g.spacing(0);
  for (std::size_t k : A.mask.nodes()) {
    double v = std::abs(gs.alpha_star.values[k]);
    amax = std::max(amax, v);
    if (A.mask.dist(k) <= h * (1 + 1e-9)) edge = std::max(edge, v);
  }
  if (edge >= 1e-6 * amax)
    throw UsageError("relative ground state does not decay inside the box; increase L");
  if (opt.fit_decay) gs.rho_star = fit_decay_rate(gs);
  if (opt.couplings) {
    Couplings c = compute_couplings(gs.alpha_star, gs.E_b, opt.p_max, opt.n_p);
    gs.g_bcs = c.g_bcs;
    gs.g_0 = c.g_0;
  }
  return gs;
}

// Box [-L, L]^d with L >= L_min and node spacing exactly ds.
inline RelativeGroundState solve_relative_spacing(const Potential& V, double ds, double L_min, int dim = 1,
                                                  const RelativeOptions& opt = {}) {
  require(ds > 0.0, "solve_relative_spacing: spacing must be positive");
  int m = static_cast<int>(std::ceil(L_min / ds - 1e-9));
  m = std::max(m, 2);
  return solve_relative(V, m * ds, 2 * m + 1, dim, opt);
}

// Second eigenvalue of the relative operator by deflated inverse iteration.
inline double relative_second_eigenvalue(const RelativeGroundState& gs, double tol = 1e-9, int max_iter = 5000) {
  StencilOperator A = relative_operator(gs.V, gs.alpha_star.grid);
  SparseMatrix K = A.to_sparse();
  const auto N = static_cast<Eigen::Index>(A.mask.count());
  Eigen::VectorXd a = restrict_to_mask(A.mask, gs.alpha_star);
  a.normalize();
  SparseMatrix I(N, N);
  I.setIdentity();
  double sigma = -gs.E_b - 1e-3 * (1.0 + gs.E_b);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(K - sigma * I);
  require(ldlt.info() == Eigen::Success, "relative_second_eigenvalue: factorization failed");
  Eigen::VectorXd v(N);
  for (Eigen::Index i = 0; i < N; ++i) v[i] = std::sin(0.5 + 0.01 * i) * (i < N / 2 ? 1.0 : -1.0);
  double theta = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    v -= a.dot(v) * a;
    v = ldlt.solve(v);
    v -= a.dot(v) * a;
    v.normalize();
    Eigen::VectorXd Kv = K * v;
    theta = v.dot(Kv);
    if ((Kv - theta * v).norm() <= tol * A.norm_estimate()) return theta;
  }
  throw SolverError("relative_second_eigenvalue did not converge", 0.0, max_iter);
}

inline double fit_decay_rate(const RelativeGroundState& gs) {
  const RealField& a = gs.alpha_star;
  const Grid& g = a.grid;
  const double L = gs.L, h = g.spacing(0);
  const int nb = static_cast<int>(std::floor(L / h)) + 1;
  std::vector<double> mass(nb, 0.0);
  std::vector<int> count(nb, 0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    Point3 x = g.point(k);
    double r = 0.0;
    for (int d = 0; d < g.dim(); ++d) r += x[d] * x[d];
    int b = static_cast<int>(std::lround(std::sqrt(r) / h));
    if (b >= nb) continue;
    mass[b] += a.values[k] * a.values[k];
    ++count[b];
  }
  std::vector<double> xs, ys;
  for (int b = 0; b < nb; ++b) {
    double r = b * h;
    if (r < 0.2 * L || r > 0.8 * L || count[b] == 0) continue;
    double m = g.dim() == 1 ? mass[b] : mass[b] / count[b];
    if (!(m > 0.0)) throw UsageError("fit_decay_rate: shell mass vanishes inside the window; box too large for the resolution");
    xs.push_back(r);
    ys.push_back(std::log(m));
  }
  require(xs.size() >= 3, "fit_decay_rate: too few shells in the fit window");
  for (std::size_t i = 1; i < ys.size(); ++i)
    if (ys[i] >= ys[i - 1]) throw UsageError("fit_decay_rate: shell mass is not monotone; increase the box");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ys[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx, icpt = my - slope * mx;
  double rms = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) rms += std::pow(ys[i] - (icpt + slope * xs[i]), 2) / n;
  rms = std::sqrt(rms);
  if (rms > 0.1)
    throw UsageError("fit_decay_rate: log shell mass is not linear in r (rms " + std::to_string(rms) +
                     "); decay is not exponential");
  return -slope / 2.0;
}

namespace detail {

inline Couplings couplings_at(const RealField& a, double E_b, double p_max, double dp) {
  const int d = a.grid.dim();
  const int half = static_cast<int>(std::floor(p_max / dp + 1e-9));
  std::vector<double> axis;
  for (int k = -half; k <= half; ++k) axis.push_back(k * dp);
  auto fh = fourier_tensor(a, axis);
  const std::size_t np = axis.size();
  double g1 = 0.0, g0 = 0.0;
  auto w = [&](std::size_t k) { return (k == 0 || k + 1 == np) ? 0.5 * dp : dp; };
  for (std::size_t i = 0; i < fh.size(); ++i) {
    double p2 = 0.0, wt = 1.0;
    if (d == 1) {
      p2 = axis[i] * axis[i];
      wt = w(i);
    } else {
      std::size_t ix = i / np, iy = i % np;
      p2 = axis[ix] * axis[ix] + axis[iy] * axis[iy];
      wt = w(ix) * w(iy);
    }
    double f4 = std::norm(fh[i]) * std::norm(fh[i]);
    g0 += wt * f4;
    g1 += wt * p2 * f4;
  }
  const double norm = std::pow(2.0 * M_PI, -d);
  return {norm * (g1 + E_b * g0), norm * g0};
}

}  // namespace detail

// (2 pi)^-d int (p^2 + E_b)|a^(p)|^4 dp and (2 pi)^-d int |a^(p)|^4 dp.
inline Couplings compute_couplings(const RealField& a, double E_b, double p_max, int n_p) {
  const Grid& g = a.grid;
  bool zero = std::all_of(a.values.begin(), a.values.end(), [](double v) { return v == 0.0; });
  if (zero) return {0.0, 0.0};
  const double ds = g.spacing(0);
  const double zone = M_PI / ds;
  if (p_max <= 0.0) p_max = std::min(20.0, zone);
  require(p_max <= zone * (1 + 1e-12), "compute_couplings: p_max exceeds the lattice momentum pi/ds");
  require(n_p >= 512, "compute_couplings: need n_p >= 512");
  double extent = 0.0;
  for (int d = 0; d < g.dim(); ++d) extent = std::max({extent, std::abs(g.lower(d)), std::abs(g.upper(d))});
  const double dp = std::min(2.0 * p_max / (n_p - 1), 0.5 / extent);
  Couplings full = detail::couplings_at(a, E_b, p_max, dp);
  Couplings half = detail::couplings_at(a, E_b, 0.5 * p_max, dp);
  double change = std::max(std::abs(full.g_bcs - half.g_bcs) / full.g_bcs, std::abs(full.g_0 - half.g_0) / full.g_0);
  if (change > 1e-4) throw SolverError("compute_couplings: momentum quadrature not converged in p_max", change, 2);
  return full;
}

// chi(r) = S((3/2 - |r|) / (1/2)), S(t) = 6t^5 - 15t^4 + 10t^3 clamped to [0, 1].
inline double chi_profile(double r) {
  double t = std::clamp((1.5 - std::abs(r)) / 0.5, 0.0, 1.0);
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

struct CutoffState {
  double phi_h = 0.0;
  double h = 1.0;
  RealField a_field;  // chi(r / phi) h alpha_*(r)
};

inline CutoffState make_cutoff_state(const RelativeGroundState& gs, double phi_h, double h = 1.0) {
  require(phi_h > 0.0, "cutoff radius must be positive");
  CutoffState c{phi_h, h, gs.alpha_star};
  const Grid& g = c.a_field.grid;
  for (std::size_t k = 0; k < g.size(); ++k) {
    Point3 x = g.point(k);
    double r = 0.0;
    for (int d = 0; d < g.dim(); ++d) r += x[d] * x[d];
    c.a_field.values[k] *= h * chi_profile(std::sqrt(r) / phi_h);
  }
  return c;
}

// <f, (-Laplacian + E_b + V) f> on the relative grid.
inline double relative_energy(const RelativeGroundState& gs, const RealField& f) {
  StencilOperator A = relative_operator(gs.V, gs.alpha_star.grid);
  A.shift = gs.E_b;
  return inner_product(f, A.apply(f));
}

struct CutoffDiagnostics {
  double phi_h = 0.0;
  double norm_residual = 0.0;
  double gbcs_residual = 0.0;
  double g0_residual = 0.0;
  double energy_residual = 0.0;
  double decay_scale = 0.0;  // e^{-rho_* phi_h / 2}

  double max_residual() const { return std::max({norm_residual, gbcs_residual, g0_residual, energy_residual}); }
};

inline CutoffDiagnostics cutoff_diagnostics(const RelativeGroundState& gs, double phi_h, double h = 1.0) {
  require(phi_h >= 3.0, "cutoff_diagnostics: phi_h must be at least 3");
  CutoffState c = make_cutoff_state(gs, phi_h, h);
  Couplings cg = compute_couplings(c.a_field, gs.E_b);
  const double h2 = h * h, h4 = h2 * h2;
  CutoffDiagnostics out;
  out.phi_h = phi_h;
  out.norm_residual = std::abs(inner_product(c.a_field, c.a_field) - h2) / h2;
  out.gbcs_residual = std::abs(cg.g_bcs - h4 * gs.g_bcs) / h4;
  out.g0_residual = std::abs(cg.g_0 - h4 * gs.g_0) / h4;
  out.energy_residual = relative_energy(gs, c.a_field) / h2;
  out.decay_scale = std::exp(-gs.rho_star * phi_h / 2.0);
  return out;
}

}  // namespace paircond
