#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "paircond/gp.hpp"
#include "paircond/pairing.hpp"

namespace paircond {

// Chemical potential enters only through mu = -E_b + D h^2. The cutoff
// length is ell(h) = h log(h^-q).
struct BCSConfig {
  DomainMask mask;
  Potential V;
  std::optional<RealField> W;  // on mask.grid()
  double h = 0.1;
  double D = 0.0;
  double q = 6.0;

  double phi() const { return q * std::log(1.0 / h); }
  double ell() const { return h * phi(); }
  double mu(double E_b) const { return -E_b + D * h * h; }
};

// Kernel values K(x_i, x_j) over mask.nodes(); as an operator on L^2 the
// matrix is weight() * K.
struct PairKernel {
  DomainMask mask;
  Eigen::MatrixXd K;

  double weight() const { return mask.grid().weight(); }
  Eigen::MatrixXd op() const { return weight() * K; }
};

struct TrialState {
  PairKernel a_psi;
  PairKernel gamma_psi;
  RealField psi;  // on the half lattice mask.grid().refined_half()
  double h = 0.0;
  double spectrum_min = 0.0;  // eigenvalues of Gamma_psi
  double spectrum_max = 0.0;
};

struct TrialOptions {
  bool cutoff = true;      // multiply alpha_* by chi(r / phi)
  bool check_admissible = true;
};

namespace detail {

inline constexpr std::size_t kMaxNodes1d = 600;
inline constexpr std::size_t kMaxNodes2d = 1200;

inline void check_bcs_config(const BCSConfig& c) {
  const Grid& g = c.mask.grid();
  require(g.dim() == 1 || g.dim() == 2, "BCS states support d = 1, 2");
  require(c.h > 0.0 && c.h < 1.0, "BCS: h must lie in (0, 1)");
  require(c.q > 0.0, "BCS: q must be positive");
  require(std::isfinite(c.D), "BCS: D must be finite");
  require(!c.mask.empty(), "BCS: empty domain");
  const std::size_t cap = g.dim() == 1 ? kMaxNodes1d : kMaxNodes2d;
  require(c.mask.count() <= cap, "BCS: domain has " + std::to_string(c.mask.count()) +
                                     " nodes, above the dense-kernel limit " + std::to_string(cap));
  for (int a = 1; a < g.dim(); ++a)
    require(std::abs(g.spacing(a) - g.spacing(0)) <= 1e-12 * g.spacing(0), "BCS: grid spacing must be isotropic");
  if (c.W) {
    require(c.W->grid == g, "BCS: W lives on a different grid");
    require(c.W->finite(), "BCS: W must be finite");
  }
}

// Center index of the relative grid and the lattice spacing check.
inline Index3 relative_center(const BCSConfig& c, const RelativeGroundState& gs) {
  const Grid& rg = gs.alpha_star.grid;
  const Grid& g = c.mask.grid();
  require(rg.dim() == g.dim(), "BCS: relative ground state has the wrong dimension");
  const double ds = g.spacing(0) / c.h;
  for (int a = 0; a < rg.dim(); ++a) {
    require(std::abs(rg.spacing(a) - ds) <= 1e-9 * ds,
            "BCS: relative ground state must be solved at spacing dx / h");
    require(rg.n(a) % 2 == 1, "BCS: relative grid must be centered");
  }
  Index3 m{0, 0, 0};
  for (int a = 0; a < rg.dim(); ++a) m[a] = (rg.n(a) - 1) / 2;
  return m;
}

inline RealField W_or_zero(const BCSConfig& c) {
  return c.W ? *c.W : RealField(c.mask.grid(), 0.0);
}

}  // namespace detail

// Half-lattice nodes whose corner nodes all lie in the mask: Omega seen from
// the center-of-mass lattice.
inline DomainMask half_lattice_mask(const DomainMask& mask) {
  const Grid& g = mask.grid();
  const Grid hg = g.refined_half();
  std::vector<std::uint8_t> in(hg.size(), 0);
  for (std::size_t s = 0; s < hg.size(); ++s) {
    Index3 S = hg.unravel(s);
    bool ok = true;
    for (int c = 0; c < (1 << g.dim()) && ok; ++c) {
      Index3 I{0, 0, 0};
      for (int a = 0; a < g.dim(); ++a) I[a] = (S[a] % 2 == 0) ? S[a] / 2 : (S[a] - 1) / 2 + ((c >> a) & 1);
      ok = mask.inside(g.index(I));
    }
    in[s] = ok ? 1 : 0;
  }
  return DomainMask(hg, std::move(in), mask.convex_hint());
}

// Multilinear interpolation of a node field onto the half lattice.
inline RealField half_lattice_field(const RealField& f) {
  const Grid& g = f.grid;
  const Grid hg = g.refined_half();
  RealField out(hg, 0.0);
  for (std::size_t s = 0; s < hg.size(); ++s) {
    Index3 S = hg.unravel(s);
    int odd = 0;
    for (int a = 0; a < g.dim(); ++a) odd += S[a] % 2;
    double acc = 0.0;
    for (int c = 0; c < (1 << g.dim()); ++c) {
      Index3 I{0, 0, 0};
      bool dup = false;
      for (int a = 0; a < g.dim(); ++a) {
        if (S[a] % 2 == 0) {
          I[a] = S[a] / 2;
          dup = dup || ((c >> a) & 1);
        } else {
          I[a] = (S[a] - 1) / 2 + ((c >> a) & 1);
        }
      }
      if (!dup) acc += f.values[g.index(I)];
    }
    out.values[s] = acc / (1 << odd);
  }
  return out;
}

// Support of admissible order parameters: Omega eroded by ell(h), on the
// half lattice.
inline DomainMask trial_support(const BCSConfig& cfg) {
  return erode(half_lattice_mask(cfg.mask), cfg.ell());
}

// Relative ground state on the lattice r = (x - y) / h with spacing dx / h,
// wide enough to hold the cutoff support.
inline RelativeGroundState bcs_relative(const BCSConfig& cfg, RelativeOptions opt = {}, double L_min = 16.0) {
  detail::check_bcs_config(cfg);
  const double ds = cfg.mask.grid().spacing(0) / cfg.h;
  L_min = std::max(L_min, 1.5 * cfg.phi() + 2.0 * ds);
  return solve_relative_spacing(cfg.V, ds, L_min, cfg.mask.grid().dim(), opt);
}

// K(x, y) = h^-d psi((x + y) / 2) a((x - y) / h) with a sampled on the
// relative lattice; a vanishes beyond the relative grid.
inline PairKernel assemble_pair_kernel(const DomainMask& mask, const RealField& psi, const RealField& a, double h) {
  const Grid& g = mask.grid();
  require(psi.grid == g.refined_half(), "pair kernel: psi must live on the half lattice of the domain grid");
  const Grid& rg = a.grid;
  const int d = g.dim();
  require(rg.dim() == d, "pair kernel: relative field has the wrong dimension");
  Index3 m{0, 0, 0};
  for (int k = 0; k < d; ++k) m[k] = (rg.n(k) - 1) / 2;
  const Grid hg = g.refined_half();
  const auto& nodes = mask.nodes();
  const auto N = static_cast<Eigen::Index>(nodes.size());
  const double scale = std::pow(h, -d);
  PairKernel out{mask, Eigen::MatrixXd::Zero(N, N)};
  std::vector<Index3> idx(nodes.size());
  for (std::size_t c = 0; c < nodes.size(); ++c) idx[c] = g.unravel(nodes[c]);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      Index3 S{0, 0, 0}, T{0, 0, 0};
      for (int k = 0; k < d; ++k) {
        S[k] = idx[i][k] + idx[j][k];
        T[k] = m[k] + idx[i][k] - idx[j][k];
      }
      if (!rg.in_range(T)) continue;
      double v = scale * psi.values[hg.index(S)] * a.values[rg.index(T)];
      out.K(i, j) = v;
      out.K(j, i) = v;
    }
  return out;
}

inline TrialState build_trial_state(const BCSConfig& cfg, const RelativeGroundState& gs, const RealField& psi,
                                    const TrialOptions& opt = {}) {
  detail::check_bcs_config(cfg);
  detail::relative_center(cfg, gs);
  const Grid& g = cfg.mask.grid();
  require(psi.grid == g.refined_half(), "trial state: psi must live on the half lattice of the domain grid");
  require(psi.finite(), "trial state: psi must be finite");
  DomainMask support = trial_support(cfg);
  for (std::size_t s = 0; s < psi.size(); ++s)
    if (psi.values[s] != 0.0 && !support.inside(s))
      throw UsageError("trial state: Dirichlet support violated (psi must vanish within ell(h) of the boundary)");

  RealField a = opt.cutoff ? make_cutoff_state(gs, cfg.phi(), cfg.h).a_field : gs.alpha_star;
  if (!opt.cutoff)
    for (double& v : a.values) v *= cfg.h;

  TrialState st;
  st.h = cfg.h;
  st.psi = psi;
  st.a_psi = assemble_pair_kernel(cfg.mask, psi, a, cfg.h);
  const double w = st.a_psi.weight();
  const Eigen::MatrixXd A = st.a_psi.op();
  const Eigen::MatrixXd AA = A * A;
  const Eigen::MatrixXd G = AA + (1.0 + std::sqrt(cfg.h)) * (AA * AA);
  st.gamma_psi = PairKernel{cfg.mask, G / w};

  const Eigen::Index N = A.rows();
  Eigen::MatrixXd Gam(2 * N, 2 * N);
  Gam << G, A, A, Eigen::MatrixXd::Identity(N, N) - G;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gam, Eigen::EigenvaluesOnly);
  st.spectrum_min = es.eigenvalues().minCoeff();
  st.spectrum_max = es.eigenvalues().maxCoeff();
  if (opt.check_admissible && (st.spectrum_min < -1e-9 || st.spectrum_max > 1.0 + 1e-9))
    throw UsageError("trial state not admissible: spectrum of Gamma in [" + format_double(st.spectrum_min) + ", " +
                     format_double(st.spectrum_max) + "], h too large");
  return st;
}

struct BCSEnergy {
  double pair_kinetic = 0.0;  // Tr(h a a)
  double pair_potential = 0.0;  // sum V((x - y) / h) |a|^2
  double quartic = 0.0;  // (1 + h^1/2) Tr(h (a a)^2)

  double total() const { return pair_kinetic + pair_potential + quartic; }
};

// One-body operator -h^2 Laplacian + h^2 W - mu on the mask nodes.
inline SparseMatrix one_body_operator(const BCSConfig& cfg, double E_b) {
  RealField pot = detail::W_or_zero(cfg);
  const double h2 = cfg.h * cfg.h, mu = cfg.mu(E_b);
  for (double& v : pot.values) v = h2 * v - mu;
  return assemble_dirichlet(cfg.mask, -h2, pot).to_sparse();
}

namespace detail {

inline double trace_product(const SparseMatrix& H, const Eigen::MatrixXd& M) {
  double s = 0.0;
  for (int k = 0; k < H.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(H, k); it; ++it) s += it.value() * M(it.col(), it.row());
  return s;
}

inline double pair_potential_term(const BCSConfig& cfg, const Potential& V, const PairKernel& a) {
  const Grid& g = cfg.mask.grid();
  const auto& nodes = cfg.mask.nodes();
  const double w = a.weight();
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Point3 x = g.point(nodes[i]);
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      double k = a.K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (k == 0.0) continue;
      Point3 y = g.point(nodes[j]);
      Point3 r{0.0, 0.0, 0.0};
      for (int c = 0; c < g.dim(); ++c) r[c] = (x[c] - y[c]) / cfg.h;
      s += V.at(r, g.dim()) * k * k * w * w;
    }
  }
  return s;
}

}  // namespace detail

inline BCSEnergy bcs_energy_terms(const BCSConfig& cfg, const RelativeGroundState& gs, const TrialState& st) {
  detail::check_bcs_config(cfg);
  require(st.a_psi.mask == cfg.mask, "bcs_energy: state lives on a different domain");
  const SparseMatrix H = one_body_operator(cfg, gs.E_b);
  const Eigen::MatrixXd A = st.a_psi.op();
  const Eigen::MatrixXd AA = A * A;
  BCSEnergy e;
  e.pair_kinetic = detail::trace_product(H, AA);
  e.quartic = (1.0 + std::sqrt(cfg.h)) * detail::trace_product(H, AA * AA);
  e.pair_potential = detail::pair_potential_term(cfg, cfg.V, st.a_psi);
  return e;
}

inline double bcs_energy(const BCSConfig& cfg, const RelativeGroundState& gs, const TrialState& st) {
  return bcs_energy_terms(cfg, gs, st).total();
}

// GP energy of a half-lattice psi with coupling g_BCS of the relative state.
inline double gp_reference_energy(const BCSConfig& cfg, const RelativeGroundState& gs, const RealField& psi) {
  require(std::isfinite(gs.g_bcs), "gp_reference_energy: relative state has no couplings");
  std::optional<RealField> Wh;
  if (cfg.W) Wh = half_lattice_field(*cfg.W);
  GPProblem p(half_lattice_mask(cfg.mask), cfg.D, gs.g_bcs, Wh);
  return gp_energy(p, psi);
}

// rho(x) = gamma(x, x) on the domain grid.
inline RealField one_body_density(const TrialState& st) {
  const DomainMask& m = st.gamma_psi.mask;
  RealField rho(m.grid(), 0.0);
  for (std::size_t c = 0; c < m.count(); ++c)
    rho.values[m.nodes()[c]] = st.gamma_psi.K(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  return rho;
}

struct OrderParameter {
  RealField psi;           // on the half lattice
  PairKernel xi;           // xi on the pairs (x, y) of the domain
  double xi_tail_sq = 0.0;  // |xi|^2 on fiber points outside the domain
  RealField fiber_norm;    // ||alpha~(X, .)||_{L^2(D_X)}
  RealField fiber_weight;  // h^d / c: normalization of the fiber projection
  double orthogonality = 0.0;  // max_X |sum_r alpha_*(r/h) xi(X, r) dr|

  double xi_norm_sq() const {
    const double w = xi.weight();
    return w * w * xi.K.squaredNorm() + xi_tail_sq;
  }
};

// Fiber projection onto alpha_*(r / h). For fixed X = (x + y) / 2 the
// relative coordinate r = x - y runs over a parity sublattice of spacing 2 dx.
inline OrderParameter extract_order_parameter(const BCSConfig& cfg, const RelativeGroundState& gs,
                                              const PairKernel& alpha) {
  detail::check_bcs_config(cfg);
  const Index3 m = detail::relative_center(cfg, gs);
  require(alpha.mask == cfg.mask, "extract_order_parameter: kernel lives on a different domain");
  const auto N = alpha.K.rows();
  require(alpha.K.cols() == N && N == static_cast<Eigen::Index>(cfg.mask.count()),
          "extract_order_parameter: kernel has the wrong shape");
  const double asym = (alpha.K - alpha.K.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * std::max(1.0, alpha.K.cwiseAbs().maxCoeff()), "extract_order_parameter: kernel is not symmetric");

  const Grid& g = cfg.mask.grid();
  const Grid hg = g.refined_half();
  const Grid& rg = gs.alpha_star.grid;
  const int d = g.dim();
  const double h = cfg.h, dx = g.spacing(0);
  const double wr = std::pow(2.0 * dx, d);   // r quadrature on the parity sublattice
  const double wX = std::pow(0.5 * dx, d);   // X quadrature on the half lattice
  const double hd = std::pow(h, d);
  const auto& astar = gs.alpha_star.values;

  // c_k = sum over the parity class k of alpha_*^2 (2 dx)^d.
  std::vector<double> c(1u << d, 0.0);
  for (std::size_t t = 0; t < rg.size(); ++t) {
    Index3 T = rg.unravel(t);
    int cls = 0;
    for (int a = 0; a < d; ++a) cls |= (((T[a] - m[a]) % 2 + 2) % 2) << a;
    c[cls] += astar[t] * astar[t] * wr;
  }
  auto parity_class = [&](const Index3& S) {
    int cls = 0;
    for (int a = 0; a < d; ++a) cls |= (S[a] % 2) << a;
    return cls;
  };

  const auto& nodes = cfg.mask.nodes();
  std::vector<Index3> idx(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) idx[k] = g.unravel(nodes[k]);
  auto pair_index = [&](Eigen::Index i, Eigen::Index j, Index3& S, long& t) {
    Index3 T{0, 0, 0};
    S = Index3{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      S[a] = idx[i][a] + idx[j][a];
      T[a] = m[a] + idx[i][a] - idx[j][a];
    }
    t = rg.in_range(T) ? static_cast<long>(rg.index(T)) : -1;
  };

  std::vector<double> proj(hg.size(), 0.0), fib2(hg.size(), 0.0), cfib(hg.size(), 0.0);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) {
      Index3 S;
      long t;
      pair_index(i, j, S, t);
      const std::size_t s = hg.index(S);
      const double k = alpha.K(i, j);
      fib2[s] += k * k * wr;
      if (t >= 0) {
        proj[s] += astar[t] * k * wr;
        cfib[s] += astar[t] * astar[t] * wr;
      }
    }

  OrderParameter out;
  out.psi = RealField(hg, 0.0);
  out.fiber_norm = RealField(hg, 0.0);
  out.fiber_weight = RealField(hg, 0.0);
  for (std::size_t s = 0; s < hg.size(); ++s) {
    const double ck = c[parity_class(hg.unravel(s))];
    out.fiber_weight.values[s] = hd / ck;
    out.psi.values[s] = (hd / ck) * proj[s] / h;
    out.fiber_norm.values[s] = std::sqrt(fib2[s]);
  }

  const double amp = std::pow(h, 1 - d);
  out.xi = PairKernel{cfg.mask, Eigen::MatrixXd::Zero(N, N)};
  std::vector<double> orth(hg.size(), 0.0);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j < N; ++j) {
      Index3 S;
      long t;
      pair_index(i, j, S, t);
      const std::size_t s = hg.index(S);
      const double a = t >= 0 ? astar[t] : 0.0;
      const double x = alpha.K(i, j) - amp * out.psi.values[s] * a;
      out.xi.K(i, j) = x;
      orth[s] += a * x * wr;
    }
  // Fiber points outside the domain: xi = -h^(1-d) psi alpha_*.
  for (std::size_t s = 0; s < hg.size(); ++s) {
    const double p = out.psi.values[s];
    if (p == 0.0) continue;
    const double ck = c[parity_class(hg.unravel(s))];
    const double rest = ck - cfib[s];
    out.xi_tail_sq += amp * amp * p * p * rest * wX;
    orth[s] -= amp * p * rest;
    out.orthogonality = std::max(out.orthogonality, std::abs(orth[s]));
  }
  for (std::size_t s = 0; s < hg.size(); ++s)
    if (out.psi.values[s] == 0.0) out.orthogonality = std::max(out.orthogonality, std::abs(orth[s]));
  return out;
}

struct NormIdentity {
  double alpha_sq = 0.0;  // ||alpha~||^2
  double psi_part = 0.0;  // h^(2-d) ||psi||^2
  double xi_sq = 0.0;     // ||xi||^2

  double residual() const { return std::abs(alpha_sq - psi_part - xi_sq); }
};

inline NormIdentity norm_identity(const BCSConfig& cfg, const PairKernel& alpha, const OrderParameter& op) {
  const double w = alpha.weight();
  const int d = cfg.mask.grid().dim();
  NormIdentity n;
  n.alpha_sq = w * w * alpha.K.squaredNorm();
  double p2 = 0.0;
  for (double v : op.psi.values) p2 += v * v;
  n.psi_part = std::pow(cfg.h, 2 - d) * p2 * op.psi.grid.weight();
  n.xi_sq = op.xi_norm_sq();
  return n;
}

struct DecayBoundCheck {
  double C0 = 0.0;         // constant from the alpha_* tail
  double max_ratio = 0.0;  // max over X of |psi(X)| / (h^(d/2-1) e^{-2 rho a(X)/h} ||alpha~(X,.)||)
  std::size_t nodes_outside = 0;  // half-lattice nodes outside Omega that were checked
  bool holds = false;
};

// |psi(X)| <= C0 h^(d/2-1) e^{-2 rho_* a(X) / h} ||alpha~(X, .)||, where a(X) is
// the distance from X to the nearest domain node and
// C0 = 2^(d/2) sup_a e^{rho_* a} (sum_{|r| >= a} alpha_*^2 ds^d)^(1/2).
inline DecayBoundCheck decay_bound_check(const BCSConfig& cfg, const RelativeGroundState& gs,
                                         const OrderParameter& op) {
  detail::check_bcs_config(cfg);
  require(std::isfinite(gs.rho_star) && gs.rho_star > 0.0, "decay_bound_check: relative state has no decay rate");
  const Grid& g = cfg.mask.grid();
  const Grid& rg = gs.alpha_star.grid;
  const int d = g.dim();
  const double h = cfg.h, rho = gs.rho_star, dx = g.spacing(0);

  std::vector<std::pair<double, double>> shells;  // (|r|, alpha^2 ds^d)
  for (std::size_t t = 0; t < rg.size(); ++t) {
    Point3 r = rg.point(t);
    double rr = 0.0;
    for (int a = 0; a < d; ++a) rr += r[a] * r[a];
    shells.emplace_back(std::sqrt(rr), gs.alpha_star.values[t] * gs.alpha_star.values[t] * rg.weight());
  }
  std::sort(shells.begin(), shells.end());
  DecayBoundCheck out;
  double tail = 0.0;
  for (auto it = shells.rbegin(); it != shells.rend(); ++it) {
    tail += it->second;
    out.C0 = std::max(out.C0, std::exp(rho * it->first) * std::sqrt(tail));
  }
  out.C0 *= std::pow(2.0, 0.5 * d);

  DomainMask inside_half = half_lattice_mask(cfg.mask);
  const Grid& hg = op.psi.grid;
  // Distance from each half-lattice point to the nearest domain node.
  std::vector<std::uint8_t> hfeat(hg.size(), 0);
  for (std::size_t k : cfg.mask.nodes()) {
    Index3 I = g.unravel(k), S{0, 0, 0};
    for (int a = 0; a < d; ++a) S[a] = 2 * I[a];
    hfeat[hg.index(S)] = 1;
  }
  std::vector<double> a2 = detail::squared_edt(hg, hfeat);
  const double pref = std::pow(h, 0.5 * d - 1.0);
  for (std::size_t s = 0; s < hg.size(); ++s) {
    const double p = std::abs(op.psi.values[s]);
    const double fn = op.fiber_norm.values[s];
    if (fn == 0.0) continue;
    const double a = std::sqrt(a2[s]);
    if (!inside_half.inside(s) && a > 0.5 * dx * (1.0 + 1e-12)) ++out.nodes_outside;
    const double bound = pref * std::exp(-2.0 * rho * a / h) * fn;
    out.max_ratio = std::max(out.max_ratio, p / (op.fiber_weight.values[s] * bound));
  }
  out.holds = out.max_ratio <= out.C0 * (1.0 + 1e-10);
  return out;
}

struct SemiclassicsRecord {
  double h = 0.0;
  double lhs_i = 0.0, rhs_i = 0.0, residual_i = 0.0;
  double lhs_ii = 0.0, rhs_ii = 0.0, residual_ii = 0.0;
  double lhs_iii_bcs = 0.0, rhs_iii_bcs = 0.0, residual_iii_bcs = 0.0;
  double lhs_iii_0 = 0.0, rhs_iii_0 = 0.0, residual_iii_0 = 0.0;
};

// Left sides by kernel quadrature, right sides from norms of psi and the
// couplings of the cutoff pair function a. Residuals are relative to the
// size of the right side.
inline SemiclassicsRecord semiclassics_check(const BCSConfig& cfg, const RelativeGroundState& gs,
                                             const RealField& psi, const CutoffState& cut) {
  detail::check_bcs_config(cfg);
  detail::relative_center(cfg, gs);
  require(cut.a_field.grid == gs.alpha_star.grid, "semiclassics: cutoff state lives on a different grid");
  require(std::abs(cut.h - cfg.h) <= 1e-12 * cfg.h, "semiclassics: cutoff state built for a different h");
  const Grid& g = cfg.mask.grid();
  const int d = g.dim();
  const double h = cfg.h, hd = std::pow(h, -d), mu = cfg.mu(gs.E_b);

  PairKernel K = assemble_pair_kernel(cfg.mask, psi, cut.a_field, h);
  const Eigen::MatrixXd A = K.op();
  const Eigen::MatrixXd AA = A * A;
  const Eigen::MatrixXd A4 = AA * AA;

  const double a2 = inner_product(cut.a_field, cut.a_field);
  const double aHa = relative_energy(gs, cut.a_field);
  const double wX = psi.grid.weight();
  double p2 = 0.0, p4 = 0.0;
  for (double v : psi.values) {
    p2 += v * v * wX;
    p4 += v * v * v * v * wX;
  }
  const double grad2 = detail::gradient_sq_sum(psi) * wX;

  SemiclassicsRecord r;
  r.h = h;
  {
    BCSConfig free = cfg;
    free.W.reset();
    const SparseMatrix H = one_body_operator(free, gs.E_b);
    r.lhs_i = detail::trace_product(H, AA) + detail::pair_potential_term(cfg, cfg.V, K);
    const double kin = a2 * std::pow(h, 2 - d) * 0.25 * grad2;
    const double mass = a2 * hd * (-gs.E_b - mu) * p2;
    r.rhs_i = hd * p2 * aHa + kin + mass;
    const double scale = std::abs(hd * p2 * aHa) + std::abs(kin) + std::abs(mass);
    r.residual_i = scale > 0.0 ? std::abs(r.lhs_i - r.rhs_i) / scale : 0.0;
  }
  {
    const RealField W = detail::W_or_zero(cfg);
    const RealField Wh = half_lattice_field(W);
    const auto& nodes = cfg.mask.nodes();
    Eigen::VectorXd wd(static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t c = 0; c < nodes.size(); ++c) wd[static_cast<Eigen::Index>(c)] = W.values[nodes[c]];
    r.lhs_ii = (wd.asDiagonal() * AA).trace();
    double wpsi = 0.0, wabs = 0.0;
    for (std::size_t s = 0; s < psi.size(); ++s) {
      wpsi += Wh.values[s] * psi.values[s] * psi.values[s] * wX;
      wabs += std::abs(Wh.values[s]) * psi.values[s] * psi.values[s] * wX;
    }
    r.rhs_ii = hd * a2 * wpsi;
    const double scale = hd * a2 * wabs;
    r.residual_ii = scale > 0.0 ? std::abs(r.lhs_ii - r.rhs_ii) / scale : 0.0;
  }
  {
    Couplings cg = compute_couplings(cut.a_field, gs.E_b, 0.0, 512);
    RealField pot = detail::W_or_zero(cfg);
    const double h2 = h * h;
    for (double& v : pot.values) v = h2 * v + gs.E_b;
    const SparseMatrix H = assemble_dirichlet(cfg.mask, -h2, pot).to_sparse();
    r.lhs_iii_bcs = detail::trace_product(H, A4);
    r.rhs_iii_bcs = hd * cg.g_bcs * p4;
    r.lhs_iii_0 = A4.trace();
    r.rhs_iii_0 = hd * cg.g_0 * p4;
    r.residual_iii_bcs = r.rhs_iii_bcs != 0.0 ? std::abs(r.lhs_iii_bcs / r.rhs_iii_bcs - 1.0) : 0.0;
    r.residual_iii_0 = r.rhs_iii_0 != 0.0 ? std::abs(r.lhs_iii_0 / r.rhs_iii_0 - 1.0) : 0.0;
  }
  return r;
}

// Pair kinetic trace Tr((-h^2 Laplacian) a a) evaluated in center-of-mass
// lattice coordinates: -(h^2 / 2)(Laplacian_x + Laplacian_y) acting on
// alpha~(X, r), whose four diagonal neighbors are (X +- dx/2, r +- dx).
inline double center_of_mass_kinetic(const BCSConfig& cfg, const PairKernel& a) {
  const Grid& g = cfg.mask.grid();
  const int d = g.dim();
  const double dx = g.spacing(0), w = a.weight();
  const auto map = cfg.mask.node_map();
  const auto& nodes = cfg.mask.nodes();
  auto value = [&](const Index3& I, const Index3& J) {
    if (!g.in_range(I) || !g.in_range(J)) return 0.0;
    long i = map[g.index(I)], j = map[g.index(J)];
    if (i < 0 || j < 0) return 0.0;
    return a.K(i, j);
  };
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const Index3 I = g.unravel(nodes[i]), J = g.unravel(nodes[j]);
      const double f = a.K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (f == 0.0) continue;
      double lap = 0.0;
      for (int ax = 0; ax < d; ++ax) {
        // (X + dx/2, r + dx) = (x + dx, y); (X - dx/2, r - dx) = (x - dx, y);
        // (X + dx/2, r - dx) = (x, y + dx); (X - dx/2, r + dx) = (x, y - dx).
        Index3 Ip = I, Im = I, Jp = J, Jm = J;
        ++Ip[ax];
        --Im[ax];
        ++Jp[ax];
        --Jm[ax];
        lap += value(Ip, J) + value(Im, J) + value(I, Jp) + value(I, Jm) - 4.0 * f;
      }
      s += f * (-0.5 * cfg.h * cfg.h) * lap / (dx * dx) * w * w;
    }
  return s;
}

// Binary row-major float64 kernel plus a JSON sidecar.
inline void export_kernel(const std::string& path, const PairKernel& k, double h, const std::string& kind) {
  std::ofstream bin(path + ".bin", std::ios::binary);
  require(static_cast<bool>(bin), "export_kernel: cannot open " + path + ".bin");
  for (Eigen::Index i = 0; i < k.K.rows(); ++i)
    for (Eigen::Index j = 0; j < k.K.cols(); ++j) {
      double v = k.K(i, j);
      bin.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  const Grid& g = k.mask.grid();
  nlohmann::json grid{{"lower", nlohmann::json::array()}, {"upper", nlohmann::json::array()}, {"n", nlohmann::json::array()}};
  for (int a = 0; a < g.dim(); ++a) {
    grid["lower"].push_back(g.lower(a));
    grid["upper"].push_back(g.upper(a));
    grid["n"].push_back(g.n(a));
  }
  nlohmann::json side{{"n", k.K.rows()}, {"grid", grid}, {"h", h}, {"kind", kind}, {"nodes", k.mask.nodes()}};
  std::ofstream js(path + ".json");
  require(static_cast<bool>(js), "export_kernel: cannot open " + path + ".json");
  js << side.dump(2) << "\n";
}

}  // namespace paircond
