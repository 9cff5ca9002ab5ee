#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "paircond/bcs.hpp"
#include "paircond/fit.hpp"
#include "paircond/pairing.hpp"
#include "paircond/spectral.hpp"

namespace paircond {

// H_h = (h^2 / 2)(-Lap_x + W(x) - Lap_y + W(y)) + V((x - y) / h) on the
// product mask of a 1D domain, Dirichlet on its complement.
struct TwoBodyProblem {
  DomainMask mask;
  Potential V;
  std::optional<RealField> W;  // on mask.grid()
  double h = 0.1;
};

struct TwoBodyTrial {
  double value = 0.0;
  double ell = 0.0;
  double dc_minus = 0.0;  // D_c of the eroded center-of-mass domain
  RealField trial;        // on the product grid
};

namespace detail {

inline constexpr std::size_t kMaxProductNodes = 400000;
inline constexpr double kMinNodesPerPair = 5.0;

inline void check_twobody(const TwoBodyProblem& p) {
  const Grid& g = p.mask.grid();
  require(g.dim() == 1, "two-body problems are limited to d = 1");
  require(!p.mask.empty(), "two-body: empty domain");
  require(p.h > 0.0 && p.h < 1.0, "two-body: h must lie in (0, 1)");
  require(p.mask.count() * p.mask.count() <= kMaxProductNodes,
          "two-body: product grid has " + std::to_string(p.mask.count() * p.mask.count()) +
              " unknowns, above the limit " + std::to_string(kMaxProductNodes));
  require(p.h >= kMinNodesPerPair * g.spacing(0) * (1.0 - 1e-9),
          "two-body: h must span at least 5 grid spacings");
  if (p.W) {
    require(p.W->grid == g, "two-body: W lives on a different grid");
    require(p.W->finite(), "two-body: W must be finite");
  }
}

inline RealField W_or_zero(const TwoBodyProblem& p) { return p.W ? *p.W : RealField(p.mask.grid(), 0.0); }

}  // namespace detail

// {(x, y): x in Omega, y in Omega} on the tensor grid.
inline DomainMask product_mask(const DomainMask& mask) {
  const Grid& g = mask.grid();
  require(g.dim() == 1, "product_mask needs a 1D domain");
  Grid pg({g.lower(0), g.lower(0)}, {g.upper(0), g.upper(0)}, {g.n(0), g.n(0)});
  const std::size_t n = static_cast<std::size_t>(g.n(0));
  std::vector<std::uint8_t> in(pg.size(), 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) in[i * n + j] = mask.inside(i) && mask.inside(j);
  return DomainMask(pg, std::move(in));
}

inline StencilOperator twobody_operator(const TwoBodyProblem& p) {
  detail::check_twobody(p);
  DomainMask pm = product_mask(p.mask);
  const Grid& pg = pm.grid();
  const RealField W = detail::W_or_zero(p);
  const std::size_t n = static_cast<std::size_t>(p.mask.grid().n(0));
  const double h2 = p.h * p.h, dx = p.mask.grid().spacing(0);
  RealField pot(pg, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double r = (static_cast<double>(i) - static_cast<double>(j)) * dx / p.h;
      pot.values[i * n + j] = 0.5 * h2 * (W.values[i] + W.values[j]) + p.V(r);
    }
  return assemble_dirichlet(pm, -0.5 * h2, std::move(pot));
}

// Relative ground state on the lattice r / h = m dx / h. On zero total
// momentum the product stencil reduces to exactly this operator.
inline RelativeGroundState twobody_relative(const TwoBodyProblem& p, double L_min = 16.0) {
  detail::check_twobody(p);
  RelativeOptions o;
  o.fit_decay = false;
  o.couplings = false;
  return solve_relative_spacing(p.V, p.mask.grid().spacing(0) / p.h, L_min, 1, o);
}

// -E_b + h^2 D_c with both constants taken on the problem's lattice.
inline double decoupled_lower_bound(const TwoBodyProblem& p) {
  detail::check_twobody(p);
  const double E_b = twobody_relative(p).E_b;
  const double dc = compute_dc(p.mask, p.W).eigenvalue;
  return -E_b + p.h * p.h * dc;
}

// Lowest eigenpair of H_h on the product mask; the eigenvector is checked
// for exchange symmetry.
inline EigenResult ground_energy(const TwoBodyProblem& p, double tol = 1e-10) {
  StencilOperator A = twobody_operator(p);
  const RealField W = detail::W_or_zero(p);
  double wmin = 0.0;
  for (std::size_t k : p.mask.nodes()) wmin = std::min(wmin, W.values[k]);
  // Shift below the spectrum: -E_b of the lattice pair, or the potential
  // minimum without a bound state.
  double hint = 0.0;
  try {
    hint = -twobody_relative(p).E_b + p.h * p.h * wmin;
  } catch (const UsageError&) {
    for (std::size_t k : A.mask.nodes()) hint = std::min(hint, A.potential->values[k]);
  }
  hint -= 1e-3 * p.h * p.h;
  EigenResult r = smallest_eigenpair(A, tol, 1000, hint);
  const std::size_t n = static_cast<std::size_t>(p.mask.grid().n(0));
  double asym = 0.0, vmax = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      asym = std::max(asym, std::abs(r.eigenvector.values[i * n + j] - r.eigenvector.values[j * n + i]));
      vmax = std::max(vmax, std::abs(r.eigenvector.values[i * n + j]));
    }
  if (asym > 1e-8 * vmax) throw SolverError("two-body ground state is not exchange symmetric", asym / vmax, r.iterations);
  return r;
}

// Rayleigh quotient of psi_ell(X) chi(r / ell) alpha_*(r / h) with
// ell = q h log(1 / h) and psi_ell the ground state of -Lap/4 + W on the
// center-of-mass lattice eroded by ell.
inline TwoBodyTrial twobody_trial_upper_bound(const TwoBodyProblem& p, double q) {
  detail::check_twobody(p);
  require(q > 0.0, "two-body trial: q must be positive");
  const Grid& g = p.mask.grid();
  const double dx = g.spacing(0);
  const double ell = q * p.h * std::log(1.0 / p.h);
  require(ell >= 4.0 * dx, "two-body trial: ell(h) = " + format_double(ell) + " is below 4 grid spacings");
  DomainMask com = center_of_mass_mask(p.mask);
  DomainMask inner = erode(com, ell);
  require(!inner.empty(), "two-body trial: the domain eroded by ell(h) is empty");
  std::optional<RealField> Wh;
  if (p.W) Wh = half_lattice_field(*p.W);
  EigenResult cm = compute_dc(inner, Wh);
  RelativeGroundState rel = twobody_relative(p);
  const int mc = (rel.alpha_star.grid.n(0) - 1) / 2;

  StencilOperator A = twobody_operator(p);
  const std::size_t n = static_cast<std::size_t>(g.n(0));
  RealField f(A.mask.grid(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (!A.mask.inside(i * n + j)) continue;
      const long m = static_cast<long>(i) - static_cast<long>(j);
      const double r = static_cast<double>(m) * dx;
      const double c = chi_profile(r / ell);
      if (c == 0.0 || std::abs(m) > mc) continue;
      f.values[i * n + j] = cm.eigenvector.values[i + j] * c * rel.alpha_star.values[static_cast<std::size_t>(mc + m)];
    }
  for (std::size_t k = 0; k < f.size(); ++k)
    require(A.mask.inside(k) || f.values[k] == 0.0, "two-body trial: support leaves the product domain");
  const double nrm = inner_product(f, f);
  require(nrm > 0.0, "two-body trial: trial function vanishes");
  return TwoBodyTrial{inner_product(f, A.apply(f)) / nrm, ell, cm.eigenvalue, f};
}

// Omega = (a, b) with the grid refined as h decreases: dx = h / nodes_per_h.
struct TwoBodyScanConfig {
  double a = 0.0, b = 1.0;
  Potential V;
  std::function<double(double)> W;  // empty: W = 0
  double nodes_per_h = 10.0;
  double refine_ratio = 1.5;  // coarse grid for the Richardson estimate
  double q = 1.5;
  double tol = 1e-10;
  int threads = 1;

  TwoBodyProblem at(double h, double dx_scale = 1.0) const {
    require(b > a, "two-body scan: empty interval");
    require(nodes_per_h >= detail::kMinNodesPerPair, "two-body scan: nodes_per_h must be at least 5");
    const double dx = dx_scale * h / nodes_per_h;
    const int n = static_cast<int>(std::lround((b - a) / dx)) + 1;
    Grid g = Grid::uniform(1, a, b, n);
    TwoBodyProblem p{interval_mask(g, a, b), V, std::nullopt, h};
    if (W) p.W = RealField::from_function(g, [&](const Point3& x) { return W(x[0]); });
    return p;
  }
};

struct TwoBodyRow {
  double h = 0.0, ground = 0.0, lower = 0.0, upper = 0.0, E_b = 0.0, disc_error = 0.0;
};

inline TwoBodyRow twobody_row(const TwoBodyScanConfig& c, double h) {
  TwoBodyProblem fine = c.at(h), coarse = c.at(h, c.refine_ratio);
  TwoBodyRow r;
  r.h = h;
  r.ground = ground_energy(fine, c.tol).eigenvalue;
  r.E_b = twobody_relative(fine).E_b;
  r.lower = decoupled_lower_bound(fine);
  r.upper = twobody_trial_upper_bound(fine, c.q).value;
  const double ec = ground_energy(coarse, c.tol).eigenvalue;
  const double ratio = coarse.mask.grid().spacing(0) / fine.mask.grid().spacing(0);
  r.disc_error = std::abs(r.ground - ec) / (ratio * ratio - 1.0);
  return r;
}

// Ground energies over h with the decoupled lower bound, the trial upper
// bound and the fit of (E_0 + E_b) / h^2 toward D_c.
inline ScanReport asymptotic_scan(const TwoBodyScanConfig& c, const std::vector<double>& h_list) {
  require(h_list.size() >= 3, "two-body scan: need at least 3 values of h");
  require(c.refine_ratio > 1.0, "two-body scan: refine_ratio must exceed 1");
  for (std::size_t i = 0; i + 1 < h_list.size(); ++i)
    require(h_list[i] > h_list[i + 1], "two-body scan: h values must be strictly descending");
  for (double h : h_list) {
    detail::check_twobody(c.at(h));
    detail::check_twobody(c.at(h, c.refine_ratio));
  }

  std::vector<TwoBodyRow> rows(h_list.size());
  const std::size_t workers = static_cast<std::size_t>(std::max(1, c.threads));
  for (std::size_t start = 0; start < h_list.size(); start += workers) {
    std::vector<std::future<TwoBodyRow>> jobs;
    for (std::size_t i = start; i < std::min(h_list.size(), start + workers); ++i)
      jobs.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, twobody_row, std::cref(c),
                                h_list[i]));
    for (std::size_t i = 0; i < jobs.size(); ++i) rows[start + i] = jobs[i].get();
  }

  // Reference D_c on the finest grid of the scan.
  TwoBodyProblem finest = c.at(h_list.back());
  const double dc = compute_dc(finest.mask, finest.W).eigenvalue;

  ScanReport rep;
  rep.columns = {"h", "ground_energy", "lower_bound", "upper_bound", "slope_partial", "binding_energy", "disc_error"};
  for (const auto& r : rows)
    rep.add_row({r.h, r.ground, r.lower, r.upper, (r.ground + r.E_b) / (r.h * r.h), r.E_b, r.disc_error});
  rep.sort_rows();

  // Three smallest h: linear extrapolation of the partial slope to h = 0,
  // and the exponent of the remainder E_0 + E_b - h^2 D_c.
  std::vector<double> hs, sl, rem;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& r = rep.rows[i];
    hs.push_back(r[0]);
    sl.push_back(r[4]);
    rem.push_back(std::abs(r[1] + r[5] - r[0] * r[0] * dc));
  }
  PowerLawFit lin = fit_power_law(hs, sl, FitModel::linear);
  rep.fits["slope"] = lin;
  bool sandwich = true;
  nlohmann::json residuals = nlohmann::json::array();
  for (const auto& r : rep.rows) {
    sandwich = sandwich && r[2] - r[6] <= r[1] && r[1] <= r[3] + r[6];
    residuals.push_back(r[1] + r[5] - r[0] * r[0] * dc);
  }
  double nu_hat = std::numeric_limits<double>::quiet_NaN();
  if (std::all_of(rem.begin(), rem.end(), [](double v) { return v > 0.0; })) {
    PowerLawFit rf = fit_power_law(hs, rem);
    rep.fits["remainder"] = rf;
    nu_hat = rf.exponent - 2.0;
  }
  rep.summary = {{"D_c_fit", lin.prefactor},
                 {"D_c", dc},
                 {"slope_relative_error", std::abs(lin.prefactor - dc) / dc},
                 {"nu_hat", nu_hat},
                 {"residuals", residuals},
                 {"sandwich", sandwich}};
  rep.metadata = {{"interval", {c.a, c.b}},
                  {"potential", c.V.to_json()},
                  {"nodes_per_h", c.nodes_per_h},
                  {"refine_ratio", c.refine_ratio},
                  {"q", c.q}};
  return rep;
}

}  // namespace paircond
