// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "paircond/cli.hpp"

namespace fs = std::filesystem;
using namespace paircond;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

json load_config(const std::string& name) {
  std::ifstream in(fs::path(PAIRCOND_CONFIGS) / (name + ".json"));
  require(static_cast<bool>(in), "missing config " + name);
  return json::parse(in);
}

cli::RunOutput run_config(const std::string& experiment, const std::string& name) {
  cli::Context ctx;
  return cli::parse(experiment, load_config(name), ctx).job();
}

Verdict dirichlet_constant() {
  double a = run_config("dc", "dc_interval").results["D_c"];
  double b = run_config("dc", "dc_square").results["D_c"];
  double ea = std::abs(a - M_PI * M_PI / 4), eb = std::abs(b - M_PI * M_PI / 2);
  return {ea <= 1e-3 && eb <= 5e-3, "interval err " + fmt(ea) + " (tol 1e-3), square err " + fmt(eb) + " (tol 5e-3)"};
}

Verdict bound_state() {
  auto gs = solve_relative(Potential::poschl_teller_default(), 16.0, 3201);
  double sup = 0.0;
  for (std::size_t k = 0; k < gs.alpha_star.size(); ++k) {
    double x = gs.alpha_star.grid.point(k)[0];
    sup = std::max(sup, std::abs(gs.alpha_star.values[k] - 1.0 / (std::cosh(x) * std::sqrt(2.0))));
  }
  double eE = std::abs(gs.E_b - 1.0), eR = std::abs(gs.rho_star - 1.0);
  return {eE <= 1e-4 && sup <= 1e-4 && eR <= 0.02,
          "|E_b-1| " + fmt(eE) + ", sup alpha err " + fmt(sup) + ", |rho-1| " + fmt(eR)};
}

Verdict couplings() {
  using boost::math::quadrature::gauss_kronrod;
  auto ahat4 = [](double p) { return std::pow(M_PI / (std::cosh(M_PI * p / 2) * std::sqrt(2.0)), 4); };
  double g0 = gauss_kronrod<double, 61>::integrate(ahat4, -40.0, 40.0, 15, 1e-14) / (2 * M_PI);
  double g2 = gauss_kronrod<double, 61>::integrate([&](double p) { return p * p * ahat4(p); }, -40.0, 40.0, 15, 1e-14) /
              (2 * M_PI);
  auto gs = solve_relative(Potential::poschl_teller_default(), 20.0, 8001);
  double r0 = std::abs(gs.g_0 / g0 - 1.0), rb = std::abs(gs.g_bcs / (g0 + g2) - 1.0);
  return {r0 <= 1e-5 && rb <= 1e-5, "g_0 rel err " + fmt(r0) + ", g_BCS rel err " + fmt(rb) + " (tol 1e-5)"};
}

Verdict twobody() {
  auto o = run_config("twobody-scan", "twobody_scan");
  double err = o.results["slope_relative_error"];
  bool sandwich = o.results["sandwich"];
  return {err <= 0.03 && sandwich, "D_c fit " + fmt(o.results["D_c_fit"].get<double>(), 6) + " vs " +
                                       fmt(o.results["D_c"].get<double>(), 6) + " (rel err " + fmt(err) +
                                       "), sandwich " + (sandwich ? "holds" : "violated") + ", nu_hat " +
                                       fmt(o.results["nu_hat"].get<double>(), 3)};
}

Verdict continuity() {
  auto disk = run_config("continuity", "continuity_disk");
  double ei = disk.results["exponent_interior"], ee = disk.results["exponent_exterior"];
  auto slit = run_config("continuity", "continuity_slit");
  auto di = slit.scan->column("diff_interior");  // rows sorted by increasing ell
  bool converges = slit.scan->fits.at("interior").exponent > 0.0;
  for (std::size_t i = 1; i < di.size(); ++i) converges = converges && di[i - 1] < di[i];
  bool floor = slit.results["exterior_above_floor"];
  return {ei >= 0.9 && ee >= 0.9 && converges && floor,
          "disk exponents " + fmt(ei) + " / " + fmt(ee) + " (>= 0.9); slit interior " +
              (converges ? "converges" : "does not converge") + ", exterior floor " +
              fmt(slit.results["exterior_floor"].get<double>()) + (floor ? " respected" : " violated")};
}

Verdict bcs_upper_bound() {
  auto o = run_config("bcs-trial", "bcs_trial");
  double ex = o.scan->fits.at("diff").exponent;
  auto lo = o.scan->column("spectrum_min"), hi = o.scan->column("spectrum_max");
  bool adm = *std::min_element(lo.begin(), lo.end()) >= -1e-9 && *std::max_element(hi.begin(), hi.end()) <= 1 + 1e-9;
  std::string diag = o.scan->fits.count("diff_without_sqrt_h")
                         ? ", without the h^1/2 factor " + fmt(o.scan->fits.at("diff_without_sqrt_h").exponent)
                         : "";
  return {ex >= 0.8 && adm, "exponent " + fmt(ex) + " (>= 0.8)" + diag + ", Gamma spectrum in [" +
                                fmt(*std::min_element(lo.begin(), lo.end())) + ", " +
                                fmt(*std::max_element(hi.begin(), hi.end())) + "]"};
}

BCSConfig unit_config(double h) {
  Grid g = Grid::uniform(1, 0.0, 1.0, 501);
  BCSConfig c;
  c.mask = interval_mask(g, 0.0, 1.0);
  c.V = Potential{};
  c.h = h;
  c.q = 1.5;
  c.D = M_PI * M_PI / 4 + 1.0;
  return c;
}

RealField bump(const Grid& half, double a, double b) {
  return RealField::from_function(half, [&](const Point3& x) {
    double t = (x[0] - a) / (b - a);
    return (t > 0 && t < 1) ? std::pow(std::sin(M_PI * t), 2) : 0.0;
  });
}

Verdict decomposition() {
  Grid g = Grid::uniform(1, 0.0, 1.0, 501);
  // Round trip of an uncut pair kernel.
  BCSConfig c = unit_config(0.02);
  RelativeOptions ro;
  ro.fit_decay = false;
  auto gs = bcs_relative(c, ro, 60.0);
  RealField psi = bump(g.refined_half(), 0.3, 0.7);
  TrialOptions to;
  to.cutoff = false;
  auto st = build_trial_state(c, gs, psi, to);
  auto op = extract_order_parameter(c, gs, st.a_psi);
  double rt = 0.0;
  for (std::size_t s = 0; s < psi.size(); ++s) rt = std::max(rt, std::abs(op.psi.values[s] - psi.values[s]));
  // Norm identity on a kernel with a sizeable xi.
  BCSConfig c2 = unit_config(0.05);
  auto gs2 = bcs_relative(c2);
  RealField mode = compute_dc(trial_support(c2)).eigenvector;
  auto st2 = build_trial_state(c2, gs2, mode);
  PairKernel alpha = st2.a_psi;
  for (Eigen::Index i = 0; i < alpha.K.rows(); ++i)
    for (Eigen::Index j = 0; j < alpha.K.cols(); ++j)
      alpha.K(i, j) += 0.3 * std::exp(-std::pow(double(i - j) / 20.0, 2)) * std::sin(0.01 * (i + j));
  auto n = norm_identity(c2, alpha, extract_order_parameter(c2, gs2, alpha));
  const double ni = n.residual() / n.alpha_sq;
  // Decay away from two intervals.
  bool decay = true;
  std::string ratios;
  for (double h : {0.1, 0.05}) {
    BCSConfig c3;
    c3.mask = intervals_mask(g, {{0.0, 0.4}, {0.6, 1.0}});
    c3.h = h;
    c3.q = 1.5;
    auto gs3 = bcs_relative(c3);
    PairKernel a = assemble_pair_kernel(c3.mask, bump(g.refined_half(), 0.05, 0.95),
                                        make_cutoff_state(gs3, 1e3, h).a_field, h);
    auto chk = decay_bound_check(c3, gs3, extract_order_parameter(c3, gs3, a));
    decay = decay && chk.holds && chk.nodes_outside > 0;
    ratios += (ratios.empty() ? "" : ", ") + fmt(chk.max_ratio / chk.C0);
  }
  return {rt <= 1e-8 && ni <= 1e-8 && decay, "round trip " + fmt(rt) + ", norm identity " + fmt(ni) +
                                                 " (tol 1e-8), decay max ratio / C0 = " + ratios + " (<= 1)"};
}

Verdict semiclassics() {
  auto o = run_config("semiclassics", "semiclassics");
  bool quad = o.results["part_i_within_quadrature"];
  const json& ex = o.results["exponents"];
  bool ok = quad && ex.size() == 3;
  std::string s;
  for (auto it = ex.begin(); it != ex.end(); ++it) {
    ok = ok && it.value().get<double>() >= 0.8;
    s += (s.empty() ? "" : ", ") + it.key() + " " + fmt(it.value().get<double>(), 3);
  }
  return {ok, std::string("part (i) ") + (quad ? "within" : "outside") + " (dx/h)^2; exponents " + s + " (>= 0.8)"};
}

Verdict hardy() {
  bool ok = true;
  std::string s;
  for (const char* name : {"hardy_interval", "hardy_square"}) {
    auto o = run_config("hardy", name);
    ok = ok && o.results["all_at_most_4"].get<bool>() && o.results["increasing_under_refinement"].get<bool>();
    s += (s.empty() ? "" : "; ") + std::string(name + 6) + " max " + fmt(o.results["max_quotient"].get<double>()) +
         (o.results["increasing_under_refinement"].get<bool>() ? " increasing" : " not increasing");
  }
  return {ok, s};
}

Verdict gp_solver() {
  std::mt19937 rng(9);
  std::normal_distribution<double> nd;
  // Gradient against central differences.
  Grid g2 = Grid::uniform(2, -1.2, 1.2, 25);
  auto W = RealField::from_function(g2, [](const Point3& x) { return 2.0 * x[0] * x[0]; });
  GPProblem p(l_shape_mask(g2), 6.0, 0.8, W);
  double fd_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    RealField psi(g2, 0.0), v(g2, 0.0);
    for (std::size_t k : p.mask.nodes()) {
      psi.values[k] = nd(rng);
      v.values[k] = nd(rng);
    }
    double exact = 2.0 * inner_product(gp_gradient(p, psi), v);
    const double eps = 1e-3;
    RealField a = psi, b = psi;
    for (std::size_t k = 0; k < a.size(); ++k) {
      a.values[k] += eps * v.values[k];
      b.values[k] -= eps * v.values[k];
    }
    double fd = (gp_energy(p, a) - gp_energy(p, b)) / (2 * eps);
    fd_err = std::max(fd_err, std::abs(fd - exact) / std::abs(exact));
  }
  // Restart independence of |psi|^2.
  Grid g = Grid::uniform(2, -1.2, 1.2, 41);
  auto Wr = RealField::from_function(g, [](const Point3& x) { return x[1] > 0 ? 1.0 : 0.0; });
  GPProblem pr(l_shape_mask(g), 0.0, 0.5, Wr);
  pr.D = compute_dc(pr.mask, pr.W).eigenvalue + 3.0;
  auto base = minimize_gp(pr);
  double restart = 0.0;
  for (std::uint64_t seed : {17u, 99u}) {
    GPOptions o;
    o.random_seed = seed;
    auto s = minimize_gp(pr, o);
    RealField diff(g, 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
      diff.values[k] = base.psi.values[k] * base.psi.values[k] - s.psi.values[k] * s.psi.values[k];
    restart = std::max(restart, l2_norm(diff));
  }
  // Subcritical D, one-mode bound, and the quadratic onset.
  GPProblem pi(interval_mask(Grid::uniform(1, 0.0, 1.0, 801), 0.0, 1.0), 0.0, 1.0);
  const double dc = compute_dc(pi.mask).eigenvalue;
  bool sub = true;
  for (double D : {0.0, dc - 0.5, dc - 1e-3}) {
    pi.D = D;
    auto s = minimize_gp(pi);
    sub = sub && std::abs(s.energy) <= 1e-14 && l2_norm(s.psi) <= 1e-6;
  }
  bool above = true;
  std::vector<double> ex, en;
  for (double e : {0.005, 0.01, 0.02, 0.04}) {
    pi.D = dc + e;
    auto s = minimize_gp(pi);
    above = above && one_mode_upper_bound(pi).energy >= s.energy;
    ex.push_back(e);
    en.push_back(-s.energy);
  }
  for (double e : {0.5, 2.0, 8.0}) {
    pi.D = dc + e;
    above = above && one_mode_upper_bound(pi).energy >= minimize_gp(pi).energy;
  }
  double expo = fit_power_law(ex, en).exponent;
  return {fd_err <= 1e-6 && restart <= 1e-6 && sub && above && std::abs(expo - 2.0) <= 0.02,
          "FD rel err " + fmt(fd_err) + ", restart |psi|^2 diff " + fmt(restart) + ", subcritical zero " +
              (sub ? "yes" : "no") + ", one-mode above minimizer " + (above ? "yes" : "no") + ", onset exponent " +
              fmt(expo, 5)};
}

Verdict density() {
  auto o = run_config("density", "density");
  bool mono = o.results["monotone_error_decrease"];
  double rel = -1.0;
  for (const auto& r : o.scan->rows)
    if (std::abs(r[0] - 0.05) < 1e-12) rel = r.back();
  return {mono && rel >= 0.0 && rel <= 0.2,
          std::string("weak-test errors ") + (mono ? "decrease" : "do not decrease") +
              " monotonically, particle-number error at h = 0.05: " + fmt(rel) + " (<= 0.2)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "Dirichlet constant", 10, dirichlet_constant},
      {2, "bound state", 5, bound_state},
      {3, "couplings", 5, couplings},
      {4, "two-body asymptotics", 600, twobody},
      {5, "GP continuity", 300, continuity},
      {6, "BCS-GP upper bound", 600, bcs_upper_bound},
      {7, "decomposition identities", 120, decomposition},
      {8, "semiclassics", 600, semiclassics},
      {9, "Hardy", 120, hardy},
      {10, "GP solver properties", 300, gp_solver},
      {11, "one-body density", 300, density},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && secs < c.limit_s;
    failed += pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s [%.1f s, limit %.0f s]\n", c.id, pass ? "PASS" : "FAIL", c.name,
                v.detail.c_str(), secs, c.limit_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
