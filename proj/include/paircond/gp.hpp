#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "paircond/fit.hpp"
#include "paircond/spectral.hpp"

namespace paircond {

struct GPProblem {
  DomainMask mask;
  RealField W;  // zero outside the mask
  double D = 0.0;
  double g = 1.0;

  GPProblem() = default;
  GPProblem(DomainMask m, double D_, double g_, std::optional<RealField> W_ = std::nullopt)
      : mask(std::move(m)), D(D_), g(g_) {
    require(g > 0.0, "GP coupling g must be positive");
    if (W_) {
      require(W_->grid == mask.grid(), "W lives on a different grid than the mask");
      require(W_->finite(), "W must be finite");
      W = std::move(*W_);
      for (std::size_t k = 0; k < W.size(); ++k)
        if (!mask.inside(k)) W.values[k] = 0.0;
    } else {
      W = RealField(mask.grid(), 0.0);
    }
  }

  // Same D, g and W on another mask of the same grid.
  GPProblem on(const DomainMask& other) const {
    require(other.grid() == mask.grid(), "GPProblem::on needs a mask on the same grid");
    return GPProblem(other, D, g, W);
  }
};

struct GPSolution {
  RealField psi;
  double energy = 0.0;
  double el_residual = 0.0;
  double h1_norm = 0.0;
  int iterations = 0;
};

struct GPOptions {
  double tol = 1e-9;
  int max_iter = 200;
  std::optional<RealField> initial;
  std::optional<unsigned> random_seed;  // random nonnegative start instead of the one-mode start
};

namespace detail {

inline void check_dirichlet(const GPProblem& p, const RealField& psi) {
  require(psi.grid == p.mask.grid(), "GP field lives on a different grid");
  for (std::size_t k = 0; k < psi.size(); ++k)
    if (!p.mask.inside(k) && psi.values[k] != 0.0)
      throw UsageError("GP field is not Dirichlet: nonzero value outside the mask");
}

// Sum over all lattice edges of (forward difference / spacing)^2, with zero
// values outside the grid.
inline double gradient_sq_sum(const RealField& f) {
  const Grid& g = f.grid;
  Index3 stride{g.n(1) * g.n(2), g.n(2), 1};
  double s = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) {
    Index3 i = g.unravel(k);
    for (int a = 0; a < g.dim(); ++a) {
      const double inv = 1.0 / (g.spacing(a) * g.spacing(a));
      double next = i[a] + 1 < g.n(a) ? f.values[k + stride[a]] : 0.0;
      double d = next - f.values[k];
      s += d * d * inv;
      if (i[a] == 0) s += f.values[k] * f.values[k] * inv;
    }
  }
  return s;
}

}  // namespace detail

inline double gp_energy(const GPProblem& p, const RealField& psi) {
  detail::check_dirichlet(p, psi);
  const double w = psi.grid.weight();
  double pot = 0.0, quart = 0.0;
  for (std::size_t k : p.mask.nodes()) {
    double v = psi.values[k], v2 = v * v;
    pot += (p.W.values[k] - p.D) * v2;
    quart += v2 * v2;
  }
  return w * (0.25 * detail::gradient_sq_sum(psi) + pot + p.g * quart);
}

inline double h1_norm(const RealField& psi) {
  double m = 0.0;
  for (double v : psi.values) m += v * v;
  return std::sqrt(psi.grid.weight() * (m + detail::gradient_sq_sum(psi)));
}

inline StencilOperator gp_linear_operator(const GPProblem& p) {
  RealField pot = p.W;
  for (std::size_t k : p.mask.nodes()) pot.values[k] -= p.D;
  return assemble_dirichlet(p.mask, -0.25, pot);
}

// -1/4 Laplacian psi + (W - D) psi + 2 g psi^3 on the mask. The directional
// derivative of gp_energy along v is 2 <gradient, v>.
inline RealField gp_gradient(const GPProblem& p, const RealField& psi) {
  detail::check_dirichlet(p, psi);
  RealField G = gp_linear_operator(p).apply(psi);
  for (std::size_t k : p.mask.nodes()) G.values[k] += 2.0 * p.g * std::pow(psi.values[k], 3);
  return G;
}

struct OneModeBound {
  double theta = 0.0;
  double energy = 0.0;
  double D_c = 0.0;
  double psi1_l4 = 0.0;  // ||psi_1||_4^4
  RealField psi1;
};

inline OneModeBound one_mode_upper_bound(const GPProblem& p) {
  EigenResult r = compute_dc(p.mask, p.W);
  OneModeBound b;
  b.D_c = r.eigenvalue;
  b.psi1 = r.eigenvector;
  const double w = p.mask.grid().weight();
  for (double v : b.psi1.values) b.psi1_l4 += w * v * v * v * v;
  if (p.D > b.D_c) {
    const double excess = p.D - b.D_c;
    b.theta = std::sqrt(excess / (2.0 * p.g * b.psi1_l4));
    b.energy = -excess * excess / (4.0 * p.g * b.psi1_l4);
  }
  return b;
}

// Modified Newton with Armijo backtracking. The Hessian -1/4 Laplacian +
// W - D + 6 g psi^2 is factorized by LDL^T and shifted when indefinite.
inline GPSolution minimize_gp(const GPProblem& p, const GPOptions& opt = {}) {
  const DomainMask& m = p.mask;
  const Grid& grid = m.grid();
  const double w = grid.weight();
  const auto N = static_cast<Eigen::Index>(m.count());
  StencilOperator lin = gp_linear_operator(p);
  const SparseMatrix K = lin.to_sparse();
  const double scale = lin.norm_estimate();

  Eigen::VectorXd x(N);
  if (opt.initial) {
    detail::check_dirichlet(p, *opt.initial);
    x = restrict_to_mask(m, *opt.initial);
  } else {
    OneModeBound b = one_mode_upper_bound(p);
    if (opt.random_seed) {
      std::mt19937 rng(*opt.random_seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double amp = 1e-3;
      if (b.theta > 0.0) {
        double mx = 0.0;
        for (double v : b.psi1.values) mx = std::max(mx, std::abs(v));
        amp = 2.0 * b.theta * mx;
      }
      for (Eigen::Index i = 0; i < N; ++i) x[i] = amp * u(rng);
    } else if (b.theta > 0.0) {
      x = b.theta * restrict_to_mask(m, b.psi1);
    } else {
      std::mt19937 rng(12345u);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < N; ++i) x[i] = 1e-3 * u(rng);
    }
  }

  auto energy_of = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd Kv = K * v;
    return w * (v.dot(Kv) + p.g * v.array().pow(4).sum());
  };
  auto field_of = [&](const Eigen::VectorXd& v) { return extend_from_mask(m, v); };
  auto residual_of = [&](const Eigen::VectorXd& G) { return std::sqrt(w * G.squaredNorm()); };

  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  ldlt.analyzePattern(K);
  SparseMatrix I(N, N);
  I.setIdentity();

  double E = energy_of(x);
  int it = 0;
  double res = 0.0, h1 = 0.0;
  for (;; ++it) {
    Eigen::VectorXd G = K * x + 2.0 * p.g * x.array().cube().matrix();
    res = residual_of(G);
    h1 = h1_norm(field_of(x));
    if (res <= opt.tol * (1.0 + h1)) break;
    if (it >= opt.max_iter) throw SolverError("minimize_gp did not converge", res, it);
    // Hessian (up to the factor 2w) and a shift that makes it positive definite.
    SparseMatrix H = K;
    H += SparseMatrix((6.0 * p.g * x.array().square()).matrix().asDiagonal());
    double tau = 0.0;
    for (int tries = 0;; ++tries) {
      ldlt.factorize(tau > 0.0 ? SparseMatrix(H + tau * I) : H);
      if (ldlt.info() == Eigen::Success && detail::negative_pivots(ldlt) == 0) break;
      tau = tau == 0.0 ? 1e-6 * scale : 4.0 * tau;
      if (tries > 60) throw SolverError("minimize_gp: could not regularize the Hessian", res, it);
    }
    Eigen::VectorXd s = -ldlt.solve(G);
    const double slope = 2.0 * w * G.dot(s);
    if (!(slope < 0.0)) throw std::logic_error("minimize_gp: Newton direction is not a descent direction");
    double t = 1.0, En = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      Eigen::VectorXd xn = x + t * s;
      En = energy_of(xn);
      bool armijo = En <= E + 1e-4 * t * slope;
      // Near convergence the energy decrease drops below round-off; then the
      // residual decides.
      const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                           (1.0 + std::abs(E) + w * scale * xn.squaredNorm());
      if (!armijo && std::abs(En - E) <= noise) {
        Eigen::VectorXd Gn = K * xn + 2.0 * p.g * xn.array().cube().matrix();
        armijo = residual_of(Gn) < res;
      }
      if (armijo) {
        x = std::move(xn);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Round-off floor: the step no longer changes the energy measurably.
      if (std::abs(slope) <= 1e-14 * (1.0 + std::abs(E))) throw SolverError("minimize_gp stalled at round-off", res, it);
      throw std::logic_error("minimize_gp: line search failed to decrease the energy");
    }
    E = En;
  }
  // Phase: the functional is even, return the nonnegative representative.
  if (x.sum() < 0.0) x = -x;
  GPSolution sol;
  sol.psi = field_of(x);
  sol.energy = gp_energy(p, sol.psi);
  sol.el_residual = res;
  sol.h1_norm = h1;
  sol.iterations = it;
  return sol;
}

struct ContinuityScan {
  double energy_omega = 0.0;
  ScanReport report;  // ell, energy_interior, energy_exterior, diff_interior, diff_exterior
};

// E^GP on erode(Omega, ell) and dilate(Omega, ell) for each ell, warm-started
// from the minimizer on Omega.
inline ContinuityScan continuity_scan(const GPProblem& p, const std::vector<double>& ells,
                                      const GPOptions& opt = {}) {
  require(!ells.empty(), "continuity_scan: empty ell list");
  for (double l : ells) require(l >= 0.0, "continuity_scan: ell must be nonnegative");
  GPSolution base = minimize_gp(p, opt);
  ContinuityScan out;
  out.energy_omega = base.energy;
  out.report.columns = {"ell", "energy_interior", "energy_exterior", "diff_interior", "diff_exterior"};
  const double slack = 1e-7 * (1.0 + std::abs(base.energy));
  for (double ell : ells) {
    double ei = base.energy, ee = base.energy;
    if (ell > 0.0) {
      DomainMask inner = erode(p.mask, ell), outer = dilate(p.mask, ell);
      GPOptions o = opt;
      if (inner.empty()) {
        ei = 0.0;
      } else {
        GPProblem pi = p.on(inner);
        RealField start = base.psi;
        for (std::size_t k = 0; k < start.size(); ++k)
          if (!inner.inside(k)) start.values[k] = 0.0;
        o.initial = start;
        ei = minimize_gp(pi, o).energy;
      }
      o.initial = base.psi;
      ee = minimize_gp(p.on(outer), o).energy;
    }
    if (ee > base.energy + slack || base.energy > ei + slack)
      throw SolverError("continuity_scan: energy ordering E(ext) <= E <= E(int) violated", std::max(ee - base.energy, base.energy - ei), 0);
    out.report.add_row({ell, ei, ee, std::abs(ei - base.energy), std::abs(ee - base.energy)});
  }
  out.report.sort_rows();
  std::vector<double> x, yi, ye;
  for (const auto& r : out.report.rows)
    if (r[0] > 0.0 && r[3] > 0.0 && r[4] > 0.0) {
      x.push_back(r[0]);
      yi.push_back(r[3]);
      ye.push_back(r[4]);
    }
  if (x.size() >= 3) {
    out.report.fits["interior"] = fit_power_law(x, yi);
    out.report.fits["exterior"] = fit_power_law(x, ye);
  }
  out.report.summary["energy_omega"] = base.energy;
  return out;
}

}  // namespace paircond
