#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "paircond/geometry.hpp"

namespace paircond {

using SparseMatrix = Eigen::SparseMatrix<double>;

// coefficient * Laplacian + potential + shift, with zero Dirichlet values on
// outside nodes. Acts on the inside nodes of the mask.
struct StencilOperator {
  DomainMask mask;
  double coefficient = -1.0;
  std::optional<RealField> potential;
  double shift = 0.0;

  RealField apply(const RealField& f) const {
    require(f.grid == mask.grid(), "operator applied to a field on a different grid");
    const Grid& g = mask.grid();
    RealField out(g, 0.0);
    Index3 stride{g.n(1) * g.n(2), g.n(2), 1};
    for (std::size_t k : mask.nodes()) {
      Index3 i = g.unravel(k);
      double lap = 0.0;
      for (int a = 0; a < g.dim(); ++a) {
        double inv = 1.0 / (g.spacing(a) * g.spacing(a));
        double up = (i[a] + 1 < g.n(a) && mask.inside(k + stride[a])) ? f.values[k + stride[a]] : 0.0;
        double dn = (i[a] > 0 && mask.inside(k - stride[a])) ? f.values[k - stride[a]] : 0.0;
        lap += (up + dn - 2.0 * f.values[k]) * inv;
      }
      double v = coefficient * lap + shift * f.values[k];
      if (potential) v += potential->values[k] * f.values[k];
      out.values[k] = v;
    }
    return out;
  }

  // Matrix over mask.nodes() ordering.
  SparseMatrix to_sparse() const {
    const Grid& g = mask.grid();
    auto map = mask.node_map();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(mask.count() * (2 * g.dim() + 1));
    Index3 stride{g.n(1) * g.n(2), g.n(2), 1};
    for (std::size_t c = 0; c < mask.count(); ++c) {
      std::size_t k = mask.nodes()[c];
      Index3 i = g.unravel(k);
      double diag = shift;
      if (potential) diag += potential->values[k];
      for (int a = 0; a < g.dim(); ++a) {
        double w = coefficient / (g.spacing(a) * g.spacing(a));
        diag -= 2.0 * w;
        if (i[a] + 1 < g.n(a) && map[k + stride[a]] >= 0) t.emplace_back(c, map[k + stride[a]], w);
        if (i[a] > 0 && map[k - stride[a]] >= 0) t.emplace_back(c, map[k - stride[a]], w);
      }
      t.emplace_back(c, c, diag);
    }
    SparseMatrix A(mask.count(), mask.count());
    A.setFromTriplets(t.begin(), t.end());
    return A;
  }

  // Gershgorin bound on the spectral radius.
  double norm_estimate() const {
    const Grid& g = mask.grid();
    double lap = 0.0;
    for (int a = 0; a < g.dim(); ++a) lap += 4.0 / (g.spacing(a) * g.spacing(a));
    double pmax = 0.0;
    if (potential)
      for (std::size_t k : mask.nodes()) pmax = std::max(pmax, std::abs(potential->values[k]));
    return std::abs(coefficient) * lap + pmax + std::abs(shift);
  }
};

inline StencilOperator assemble_dirichlet(const DomainMask& mask, double coefficient,
                                          std::optional<RealField> potential = std::nullopt,
                                          double shift = 0.0) {
  require(!mask.empty(), "assemble_dirichlet: empty mask");
  if (potential) {
    require(potential->grid == mask.grid(), "assemble_dirichlet: potential on a different grid");
    require(potential->finite(), "assemble_dirichlet: potential must be finite");
  }
  return StencilOperator{mask, coefficient, std::move(potential), shift};
}

struct EigenResult {
  double eigenvalue = 0.0;
  RealField eigenvector;
  double residual = 0.0;
  int iterations = 0;
};

// Values on inside nodes <-> full-grid field.
inline Eigen::VectorXd restrict_to_mask(const DomainMask& m, const RealField& f) {
  Eigen::VectorXd v(m.count());
  for (std::size_t c = 0; c < m.count(); ++c) v[c] = f.values[m.nodes()[c]];
  return v;
}

inline RealField extend_from_mask(const DomainMask& m, const Eigen::VectorXd& v) {
  RealField f(m.grid(), 0.0);
  for (std::size_t c = 0; c < m.count(); ++c) f.values[m.nodes()[c]] = v[c];
  return f;
}

namespace detail {

constexpr std::size_t kDenseLimit = 700;

// Subsample every other node on each axis.
inline std::optional<StencilOperator> coarsen(const StencilOperator& A) {
  const Grid& g = A.mask.grid();
  std::vector<double> lo(g.dim()), hi(g.dim());
  std::vector<int> n(g.dim());
  for (int a = 0; a < g.dim(); ++a) {
    n[a] = (g.n(a) + 1) / 2;
    if (n[a] < 3) return std::nullopt;
    lo[a] = g.lower(a);
    hi[a] = g.coord(a, 2 * (n[a] - 1));
  }
  Grid c(lo, hi, n);
  std::vector<std::uint8_t> in(c.size());
  std::optional<RealField> pot;
  if (A.potential) pot = RealField(c, 0.0);
  for (std::size_t k = 0; k < c.size(); ++k) {
    Index3 i = c.unravel(k);
    Index3 f{0, 0, 0};
    for (int a = 0; a < g.dim(); ++a) f[a] = 2 * i[a];
    std::size_t kf = g.index(f);
    in[k] = A.mask.inside(kf);
    if (pot) pot->values[k] = A.potential->values[kf];
  }
  DomainMask cm(c, std::move(in));
  if (cm.empty()) return std::nullopt;
  return StencilOperator{cm, A.coefficient, std::move(pot), A.shift};
}

inline EigenResult dense_smallest(const StencilOperator& A, const SparseMatrix& K) {
  Eigen::MatrixXd M = Eigen::MatrixXd(K);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  require(es.info() == Eigen::Success, "dense eigensolver failed");
  Eigen::VectorXd v = es.eigenvectors().col(0);
  EigenResult r;
  r.eigenvalue = es.eigenvalues()[0];
  r.residual = (K * v - r.eigenvalue * v).norm();
  r.iterations = 1;
  r.eigenvector = extend_from_mask(A.mask, v);
  return r;
}

inline double coarse_estimate(const StencilOperator& A) {
  if (A.mask.count() <= kDenseLimit) return dense_smallest(A, A.to_sparse()).eigenvalue;
  auto c = coarsen(A);
  if (!c) return -A.norm_estimate();
  try {
    if (c->mask.count() <= kDenseLimit) return dense_smallest(*c, c->to_sparse()).eigenvalue;
    return coarse_estimate(*c);
  } catch (const SolverError&) {
    return -A.norm_estimate();
  }
}

inline int negative_pivots(const Eigen::SimplicialLDLT<SparseMatrix>& f) {
  int neg = 0;
  const auto& D = f.vectorD();
  for (Eigen::Index i = 0; i < D.size(); ++i)
    if (D[i] <= 0.0) ++neg;
  return neg;
}

}  // namespace detail

// Lowest eigenpair by shifted inverse iteration. The shift is kept strictly
// below the lowest eigenvalue, certified by the inertia of the LDL^T factor.
inline EigenResult smallest_eigenpair(const StencilOperator& A, double tol = 1e-10, int max_iter = 1000,
                                      std::optional<double> shift_hint = std::nullopt) {
  require(tol > 0.0, "smallest_eigenpair: tol must be positive");
  const SparseMatrix K = A.to_sparse();
  const double norm = A.norm_estimate();
  const double target = tol * norm;
  EigenResult res;
  if (A.mask.count() <= detail::kDenseLimit) {
    res = detail::dense_smallest(A, K);
  } else {
    const std::size_t N = A.mask.count();
    double lam0 = shift_hint ? *shift_hint : detail::coarse_estimate(A);
    double margin = std::max(0.05 * std::abs(lam0), 1e-6 * norm);
    double sigma = shift_hint ? *shift_hint : lam0 - margin;
    SparseMatrix I(N, N);
    I.setIdentity();
    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    ldlt.analyzePattern(K);
    auto factor = [&](double s) {
      ldlt.factorize(K - s * I);
      return ldlt.info() == Eigen::Success && detail::negative_pivots(ldlt) == 0;
    };
    int guard = 0;
    while (!factor(sigma)) {
      sigma -= margin;
      margin *= 2.0;
      if (++guard > 60) throw SolverError("smallest_eigenpair: no admissible shift found", 0.0, 0);
    }
    Eigen::VectorXd v = Eigen::VectorXd::Ones(N) / std::sqrt(double(N));
    double theta = v.dot(K * v), r = std::numeric_limits<double>::infinity();
    int it = 0, refactor = 0;
    for (; it < max_iter; ++it) {
      Eigen::VectorXd w = ldlt.solve(v);
      v = w / w.norm();
      Eigen::VectorXd Kv = K * v;
      theta = v.dot(Kv);
      r = (Kv - theta * v).norm();
      if (r <= target) break;
      // Move the shift up toward the Rayleigh quotient when it is safe.
      double cand = theta - 2.0 * r;
      if (refactor < 6 && cand > sigma + 0.5 * (theta - sigma) && r < 0.1 * (theta - sigma)) {
        double keep = sigma;
        if (factor(cand)) {
          sigma = cand;
          ++refactor;
        } else {
          factor(keep);
          refactor = 6;
        }
      }
    }
    if (r > target) throw SolverError("smallest_eigenpair did not converge", r, it);
    res.eigenvalue = theta;
    res.residual = r;
    res.iterations = it + 1;
    res.eigenvector = extend_from_mask(A.mask, v);
  }
  // Normalize in the weighted L2 norm; sign-fix so the integral is >= 0.
  const double w = A.mask.grid().weight();
  double nrm = 0.0, sum = 0.0;
  for (double x : res.eigenvector.values) {
    nrm += x * x;
    sum += x;
  }
  double scale = 1.0 / std::sqrt(nrm * w);
  if (sum < 0.0) scale = -scale;
  for (double& x : res.eigenvector.values) x *= scale;
  if (res.residual > target) throw SolverError("smallest_eigenpair did not converge", res.residual, res.iterations);
  return res;
}

// Lowest eigenpair of -1/4 Laplacian + W on the mask.
inline EigenResult compute_dc(const DomainMask& mask, std::optional<RealField> W = std::nullopt,
                              double tol = 1e-10) {
  return smallest_eigenpair(assemble_dirichlet(mask, -0.25, std::move(W)), tol);
}

struct HardyResult {
  double mu = 0.0;         // largest generalized eigenvalue
  double constant = 0.0;   // c_U = 2 / sqrt(mu)
  int iterations = 0;
};

// max over phi of int d^-2 phi^2 / (int |grad phi|^2 + lambda int phi^2).
// Nodes with d < dx carry zero weight.
inline HardyResult hardy_quotient(const DomainMask& mask, double lambda_offset = 0.0, double tol = 1e-9,
                                  int max_iter = 20000) {
  const Grid& g = mask.grid();
  require(!mask.empty(), "hardy_quotient: empty mask");
  const double cap = g.max_spacing();
  Eigen::VectorXd m(mask.count());
  bool any = false;
  for (std::size_t c = 0; c < mask.count(); ++c) {
    double d = mask.dist(mask.nodes()[c]);
    m[c] = d >= cap ? 1.0 / (d * d) : 0.0;
    if (m[c] > 0.0) any = true;
  }
  require(any, "hardy_quotient: no interior nodes with d_U >= dx");
  SparseMatrix K = assemble_dirichlet(mask, -1.0, std::nullopt, lambda_offset).to_sparse();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
  require(ldlt.info() == Eigen::Success && detail::negative_pivots(ldlt) == 0,
          "hardy_quotient: -Laplacian + lambda_offset is not positive definite");
  const int N = static_cast<int>(mask.count());
  const int b = std::min(6, N);
  Eigen::MatrixXd X(N, b);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < b; ++j) X(i, j) = std::cos(0.37 * (j + 1) * i) + (j == 0 ? 1.0 : 0.0);
  double mu = 0.0, prev = -1.0;
  int it = 0;
  for (; it < max_iter; ++it) {
    Eigen::MatrixXd Y = ldlt.solve(m.asDiagonal() * X);
    // Rayleigh-Ritz on span(Y).
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(N, b);
    Eigen::MatrixXd Am = Q.transpose() * m.asDiagonal() * Q;
    Eigen::MatrixXd Bm = Q.transpose() * (K * Q);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Am, Bm);
    mu = ges.eigenvalues()[b - 1];
    X = Q * ges.eigenvectors();
    if (std::abs(mu - prev) <= tol * std::abs(mu)) break;
    prev = mu;
  }
  if (it == max_iter) throw SolverError("hardy_quotient did not converge", std::abs(mu - prev), it);
  return HardyResult{mu, 2.0 / std::sqrt(mu), it + 1};
}

}  // namespace paircond
