#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "paircond/bcs.hpp"
#include "paircond/fit.hpp"
#include "paircond/gp.hpp"
#include "paircond/pairing.hpp"
#include "paircond/spectral.hpp"
#include "paircond/twobody.hpp"

namespace paircond::cli {

using nlohmann::json;

inline const std::vector<std::string>& experiments() {
  static const std::vector<std::string> names{"dc",           "relative", "gp-min", "continuity", "twobody-scan",
                                              "bcs-trial",    "semiclassics", "hardy", "density"};
  return names;
}

// Reads one JSON object, records every value it hands out (defaults
// included) and rejects keys nobody asked for.
class ConfigReader {
 public:
  ConfigReader(const json& in, std::string path) : in_(in), path_(std::move(path)) {
    require(in_.is_object(), where() + " must be a JSON object");
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    double x = v ? expect_number(key, *v) : *def;
    out_[key] = x;
    return x;
  }

  int integer(const std::string& key, std::optional<int> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    int x = def ? *def : 0;
    if (v) {
      require(v->is_number_integer(), where(key) + " must be an integer");
      x = v->get<int>();
    }
    out_[key] = x;
    return x;
  }

  bool flag(const std::string& key, bool def) {
    const json* v = fetch(key, true);
    bool x = def;
    if (v) {
      require(v->is_boolean(), where(key) + " must be true or false");
      x = v->get<bool>();
    }
    out_[key] = x;
    return x;
  }

  std::string text(const std::string& key, std::optional<std::string> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    std::string x = def ? *def : std::string();
    if (v) {
      require(v->is_string(), where(key) + " must be a string");
      x = v->get<std::string>();
    }
    out_[key] = x;
    return x;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def = std::nullopt) {
    const json* v = fetch(key, def.has_value());
    std::vector<double> x = def ? *def : std::vector<double>{};
    if (v) {
      require(v->is_array(), where(key) + " must be an array of numbers");
      x.clear();
      for (const auto& e : *v) x.push_back(expect_number(key, e));
    }
    out_[key] = x;
    return x;
  }

  std::vector<int> integers(const std::string& key) {
    const json* v = fetch(key, false);
    require(v->is_array(), where(key) + " must be an array of integers");
    std::vector<int> x;
    for (const auto& e : *v) {
      require(e.is_number_integer(), where(key) + " must be an array of integers");
      x.push_back(e.get<int>());
    }
    out_[key] = x;
    return x;
  }

  // Raw value, validated by the caller.
  const json& raw(const std::string& key) {
    const json* v = fetch(key, false);
    out_[key] = *v;
    return *v;
  }

  template <typename F>
  auto object(const std::string& key, F&& f) {
    const json* v = fetch(key, false);
    ConfigReader child(*v, path_ + "." + key);
    auto result = f(child);
    child.finish();
    out_[key] = child.resolved();
    return result;
  }

  void finish() const {
    for (auto it = in_.begin(); it != in_.end(); ++it)
      require(used_.count(it.key()) > 0, where() + ": unknown key '" + it.key() + "'");
  }

  const json& resolved() const { return out_; }
  void set_resolved(const std::string& key, json v) { out_[key] = std::move(v); }

 private:
  const json* fetch(const std::string& key, bool optional) {
    used_.insert(key);
    if (!in_.contains(key)) {
      require(optional, where() + ": missing required key '" + key + "'");
      return nullptr;
    }
    return &in_.at(key);
  }

  double expect_number(const std::string& key, const json& v) const {
    require(v.is_number(), where(key) + " must be a number");
    double x = v.get<double>();
    require(std::isfinite(x), where(key) + " must be finite");
    return x;
  }

  std::string where(const std::string& key = "") const { return key.empty() ? path_ : path_ + "." + key; }

  const json& in_;
  std::string path_;
  json out_ = json::object();
  std::set<std::string> used_;
};

// ---- domains, fields, potentials ----

struct DomainSpec {
  json resolved;
  int n = 0;
  bool resizable = true;
};

inline DomainMask build_domain(const DomainSpec& spec, std::optional<int> n_override = std::nullopt);

inline DomainSpec read_domain(ConfigReader& r) {
  DomainSpec spec;
  r.object("domain", [&](ConfigReader& d) {
    const std::string kind = d.text("kind");
    if (kind == "file") {
      d.text("path");
      spec.resizable = false;
      return 0;
    }
    int dim = 2;
    if (kind == "interval") {
      dim = 1;
      double a = d.number("a"), b = d.number("b");
      require(b > a, "config.domain: interval needs a < b");
    } else if (kind == "intervals") {
      dim = 1;
      const json& iv = d.raw("intervals");
      require(iv.is_array() && !iv.empty(), "config.domain.intervals must be a nonempty array of [a, b] pairs");
      for (const auto& p : iv)
        require(p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number() && p[0] < p[1],
                "config.domain.intervals must hold [a, b] pairs with a < b");
    } else if (kind == "box") {
      auto lo = d.numbers("lower"), hi = d.numbers("upper");
      require(lo.size() == hi.size() && (lo.size() == 1 || lo.size() == 2), "config.domain: box needs 1 or 2 bounds");
      dim = static_cast<int>(lo.size());
    } else if (kind == "disk") {
      auto c = d.numbers("center", std::vector<double>{0.0, 0.0});
      require(c.size() == 2, "config.domain.center must have 2 entries");
      require(d.number("radius") > 0.0, "config.domain.radius must be positive");
    } else if (kind == "l_shape" || kind == "slit_square") {
    } else {
      throw UsageError("config.domain: unknown kind '" + kind + "'");
    }
    d.object("grid", [&](ConfigReader& g) {
      double lo = g.number("lower"), hi = g.number("upper");
      require(hi > lo, "config.domain.grid needs lower < upper");
      spec.n = g.integer("n");
      require(spec.n >= 3, "config.domain.grid.n must be at least 3");
      require(g.integer("dim", dim) == dim, "config.domain.grid.dim does not match the domain kind");
      return 0;
    });
    return 0;
  });
  spec.resolved = r.resolved()["domain"];
  build_domain(spec);
  return spec;
}

inline DomainMask build_domain(const DomainSpec& spec, std::optional<int> n_override) {
  const json& d = spec.resolved;
  const std::string kind = d["kind"];
  if (kind == "file") {
    require(!n_override, "config.domain: a mask file cannot be refined");
    return load_mask(d["path"].get<std::string>());
  }
  const json& gj = d["grid"];
  const int n = n_override ? *n_override : gj["n"].get<int>();
  require(n >= 3, "domain grid needs at least 3 nodes per axis");
  Grid g = Grid::uniform(gj["dim"].get<int>(), gj["lower"].get<double>(), gj["upper"].get<double>(), n);
  if (kind == "interval") return interval_mask(g, d["a"].get<double>(), d["b"].get<double>());
  if (kind == "intervals") {
    std::vector<std::pair<double, double>> iv;
    for (const auto& p : d["intervals"]) iv.emplace_back(p[0].get<double>(), p[1].get<double>());
    return intervals_mask(g, iv);
  }
  if (kind == "box") return box_mask(g, d["lower"].get<std::vector<double>>(), d["upper"].get<std::vector<double>>());
  if (kind == "disk") return disk_mask(g, d["center"].get<std::vector<double>>(), d["radius"].get<double>());
  if (kind == "l_shape") return l_shape_mask(g);
  return slit_square_mask(g);
}

using PointFunction = std::function<double(const Point3&)>;

// External field W; absent means W = 0.
inline std::optional<PointFunction> read_field(ConfigReader& r, const std::string& key = "W") {
  if (!r.has(key)) return std::nullopt;
  return r.object(key, [&](ConfigReader& w) -> std::optional<PointFunction> {
    const std::string kind = w.text("kind");
    if (kind == "zero") return std::nullopt;
    if (kind == "constant") {
      double c = w.number("value");
      return PointFunction([c](const Point3&) { return c; });
    }
    double amp = w.number(kind == "harmonic" ? "strength" : "amplitude");
    auto c = w.numbers("center", std::vector<double>{0.0});
    require(c.size() <= 3, "config." + key + ".center has too many entries");
    Point3 center{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < c.size(); ++a) center[a] = c[a];
    auto dist2 = [center](const Point3& x) {
      double s = 0.0;
      for (int a = 0; a < 3; ++a) s += (x[a] - center[a]) * (x[a] - center[a]);
      return s;
    };
    if (kind == "harmonic") return PointFunction([=](const Point3& x) { return amp * dist2(x); });
    double width = w.number("width");
    require(width > 0.0, "config." + key + ".width must be positive");
    if (kind == "gaussian")
      return PointFunction([=](const Point3& x) { return amp * std::exp(-dist2(x) / (width * width)); });
    if (kind == "cos_bump")
      return PointFunction([=](const Point3& x) {
        double t = std::sqrt(dist2(x)) / width;
        return t < 1.0 ? amp * std::pow(std::cos(M_PI * t / 2.0), 2) : 0.0;
      });
    throw UsageError("config." + key + ": unknown kind '" + kind + "'");
  });
}

inline std::optional<RealField> sample(const std::optional<PointFunction>& f, const Grid& g) {
  if (!f) return std::nullopt;
  return RealField::from_function(g, *f);
}

inline Potential read_potential(ConfigReader& r) {
  Potential p = Potential::from_json(r.raw("potential"));
  r.set_resolved("potential", p.to_json());
  return p;
}

// D directly or as the excess over D_c of the domain.
struct DSpec {
  std::optional<double> D, excess;
  double resolve(const DomainMask& m, const std::optional<RealField>& W) const {
    return D ? *D : compute_dc(m, W).eigenvalue + *excess;
  }
};

inline DSpec read_D(ConfigReader& r) {
  require(r.has("D") != r.has("D_excess"), "config: give exactly one of 'D' and 'D_excess'");
  DSpec s;
  if (r.has("D"))
    s.D = r.number("D");
  else
    s.excess = r.number("D_excess");
  return s;
}

// Order parameter for the BCS experiments.
struct PsiSpec {
  std::string kind = "bump";
  double a = 0.0, b = 1.0, amplitude = 1.0;
};

inline PsiSpec read_psi(ConfigReader& r) {
  return r.object("psi", [](ConfigReader& p) {
    PsiSpec s;
    s.kind = p.text("kind");
    if (s.kind == "bump") {
      s.a = p.number("a");
      s.b = p.number("b");
      require(s.b > s.a, "config.psi: bump needs a < b");
      s.amplitude = p.number("amplitude", 1.0);
    } else if (s.kind == "first_mode") {
      s.amplitude = p.number("amplitude", 1.0);
    } else if (s.kind != "gp_minimizer") {
      throw UsageError("config.psi: unknown kind '" + s.kind + "'");
    }
    return s;
  });
}

inline RealField make_psi(const PsiSpec& s, const BCSConfig& cfg, const RelativeGroundState& gs) {
  const Grid hg = cfg.mask.grid().refined_half();
  if (s.kind == "bump") {
    require(hg.dim() == 1, "psi bump is defined on intervals only");
    return RealField::from_function(hg, [&](const Point3& x) {
      double t = (x[0] - s.a) / (s.b - s.a);
      return (t > 0.0 && t < 1.0) ? s.amplitude * std::pow(std::sin(M_PI * t), 2) : 0.0;
    });
  }
  DomainMask sup = trial_support(cfg);
  require(!sup.empty(), "psi: the domain eroded by ell(h) is empty");
  std::optional<RealField> Wh;
  if (cfg.W) Wh = half_lattice_field(*cfg.W);
  if (s.kind == "first_mode") {
    RealField f = compute_dc(sup, Wh).eigenvector;
    for (double& v : f.values) v *= s.amplitude;
    return f;
  }
  return minimize_gp(GPProblem(sup, cfg.D, gs.g_bcs, Wh)).psi;
}

inline std::vector<double> read_h_list(ConfigReader& r, std::vector<double> def) {
  auto hs = r.numbers("h_list", std::move(def));
  require(hs.size() >= 3, "config.h_list needs at least 3 values");
  for (std::size_t i = 0; i < hs.size(); ++i) {
    require(hs[i] > 0.0 && hs[i] < 1.0, "config.h_list values must lie in (0, 1)");
    if (i) require(hs[i] < hs[i - 1], "config.h_list must be strictly descending");
  }
  return hs;
}

// ---- outputs ----

struct KernelExport {
  std::string name;
  PairKernel kernel;
  double h = 0.0;
  std::string kind;
};

struct RunOutput {
  json results = json::object();
  std::optional<ScanReport> scan;
  std::map<std::string, std::string> csv;  // file name -> contents
  std::vector<KernelExport> kernels;
};

inline std::string field_csv(const RealField& f) {
  const Grid& g = f.grid;
  static const char* axes[] = {"x", "y", "z"};
  std::ostringstream os;
  for (int a = 0; a < g.dim(); ++a) os << axes[a] << ",";
  os << "value\n";
  for (std::size_t k = 0; k < g.size(); ++k) {
    Point3 x = g.point(k);
    for (int a = 0; a < g.dim(); ++a) os << format_double(x[a]) << ",";
    os << format_double(f.values[k]) << "\n";
  }
  return os.str();
}

struct Context {
  std::uint64_t seed = 0;
  int threads = 1;
};

// A parsed experiment: validation happens in the constructor of the closure,
// computation when it is called.
using Job = std::function<RunOutput()>;

// ---- experiments ----

inline Job parse_dc(ConfigReader& r, const Context&) {
  DomainSpec ds = read_domain(r);
  auto W = read_field(r);
  double tol = r.number("tol", 1e-10);
  return [=] {
    DomainMask m = build_domain(ds);
    EigenResult e = compute_dc(m, sample(W, m.grid()), tol);
    RunOutput o;
    o.results = {{"D_c", e.eigenvalue}, {"residual", e.residual}, {"iterations", e.iterations}, {"nodes", m.count()}};
    o.csv["field.csv"] = field_csv(e.eigenvector);
    return o;
  };
}

inline Job parse_relative(ConfigReader& r, const Context&) {
  Potential V = read_potential(r);
  int dim = r.integer("dim", 1);
  require(dim == 1 || dim == 2, "config.dim must be 1 or 2");
  double L = r.number("L", 16.0);
  int n = r.integer("n", dim == 1 ? 3201 : 161);
  require(L > 0.0 && n >= 5 && n % 2 == 1, "config: relative grid needs L > 0 and odd n >= 5");
  RelativeOptions opt;
  opt.tol = r.number("tol", 1e-10);
  opt.fit_decay = r.flag("fit_decay", true);
  opt.p_max = r.number("p_max", 0.0);
  opt.n_p = r.integer("n_p", 512);
  return [=] {
    RelativeGroundState gs = solve_relative(V, L, n, dim, opt);
    RunOutput o;
    o.results = {{"E_b", gs.E_b},         {"rho_star", gs.rho_star}, {"g_bcs", gs.g_bcs},
                 {"g_0", gs.g_0},         {"residual", gs.residual}, {"iterations", gs.iterations},
                 {"spacing", gs.spacing()}};
    if (V.kind == Potential::Kind::poschl_teller && dim == 1)
      o.results["E_b_closed_form"] = V.poschl_teller_binding();
    o.csv["alpha.csv"] = field_csv(gs.alpha_star);
    return o;
  };
}

inline Job parse_gp_min(ConfigReader& r, const Context& ctx) {
  DomainSpec ds = read_domain(r);
  auto W = read_field(r);
  DSpec D = read_D(r);
  double g = r.number("g", 1.0);
  require(g > 0.0, "config.g must be positive");
  GPOptions opt;
  opt.tol = r.number("tol", 1e-9);
  opt.max_iter = r.integer("max_iter", 200);
  int restarts = r.integer("restarts", 0);
  require(restarts >= 0, "config.restarts must be nonnegative");
  const std::uint64_t seed = ctx.seed;
  return [=] {
    DomainMask m = build_domain(ds);
    auto Wf = sample(W, m.grid());
    GPProblem p(m, D.resolve(m, Wf), g, Wf);
    GPSolution s = minimize_gp(p, opt);
    OneModeBound b = one_mode_upper_bound(p);
    RunOutput o;
    o.results = {{"D", p.D},
                 {"D_c", b.D_c},
                 {"energy", s.energy},
                 {"h1_norm", s.h1_norm},
                 {"el_residual", s.el_residual},
                 {"iterations", s.iterations},
                 {"one_mode", {{"theta", b.theta}, {"energy", b.energy}}}};
    json rs = json::array();
    for (int i = 0; i < restarts; ++i) {
      GPOptions ro = opt;
      ro.random_seed = seed + static_cast<std::uint64_t>(i);
      GPSolution t = minimize_gp(p, ro);
      RealField diff(m.grid(), 0.0);
      for (std::size_t k = 0; k < diff.size(); ++k)
        diff.values[k] = s.psi.values[k] * s.psi.values[k] - t.psi.values[k] * t.psi.values[k];
      rs.push_back({{"seed", *ro.random_seed}, {"energy", t.energy}, {"density_difference", l2_norm(diff)}});
    }
    o.results["restarts"] = rs;
    o.csv["field.csv"] = field_csv(s.psi);
    return o;
  };
}

inline Job parse_continuity(ConfigReader& r, const Context&) {
  DomainSpec ds = read_domain(r);
  auto W = read_field(r);
  DSpec D = read_D(r);
  double g = r.number("g", 1.0);
  auto ells = r.numbers("ell_list");
  require(ells.size() >= 3, "config.ell_list needs at least 3 values");
  GPOptions opt;
  opt.tol = r.number("tol", 1e-9);
  // Optional reference domain: the exterior floor is E(domain) - E(reference).
  std::optional<DomainSpec> ref;
  if (r.has("floor_reference")) {
    ref = r.object("floor_reference", [](ConfigReader& f) { return read_domain(f); });
  }
  return [=] {
    DomainMask m = build_domain(ds);
    auto Wf = sample(W, m.grid());
    GPProblem p(m, D.resolve(m, Wf), g, Wf);
    ContinuityScan s = continuity_scan(p, ells, opt);
    RunOutput o;
    o.results = {{"D", p.D}, {"energy_omega", s.energy_omega}};
    for (const auto& [name, f] : s.report.fits) o.results["exponent_" + name] = f.exponent;
    if (ref) {
      DomainMask rm = build_domain(*ref);
      require(rm.grid() == m.grid(), "config.floor_reference must use the same grid as the domain");
      double floor = s.energy_omega - minimize_gp(p.on(rm), opt).energy;
      bool above = true;
      for (double v : s.report.column("diff_exterior")) above = above && v >= floor;
      o.results["exterior_floor"] = floor;
      o.results["exterior_above_floor"] = above && floor > 0.0;
    }
    o.scan = s.report;
    return o;
  };
}

inline Job parse_twobody(ConfigReader& r, const Context& ctx) {
  TwoBodyScanConfig c;
  r.object("interval", [&](ConfigReader& iv) {
    c.a = iv.number("a");
    c.b = iv.number("b");
    return 0;
  });
  require(c.b > c.a, "config.interval needs a < b");
  c.V = read_potential(r);
  auto W = read_field(r);
  if (W) c.W = [W](double x) { return (*W)(Point3{x, 0.0, 0.0}); };
  auto hs = read_h_list(r, {0.1, 0.07, 0.05, 0.035, 0.025});
  c.nodes_per_h = r.number("nodes_per_h", 10.0);
  c.refine_ratio = r.number("refine_ratio", 1.5);
  c.q = r.number("q", 1.5);
  c.tol = r.number("tol", 1e-10);
  c.threads = ctx.threads;
  require(c.nodes_per_h >= 5.0, "config.nodes_per_h must be at least 5");
  require(c.refine_ratio > 1.0, "config.refine_ratio must exceed 1");
  for (double h : hs) {
    detail::check_twobody(c.at(h));
    detail::check_twobody(c.at(h, c.refine_ratio));
  }
  return [=] {
    RunOutput o;
    o.scan = asymptotic_scan(c, hs);
    o.results = o.scan->summary;
    return o;
  };
}

struct BCSSetup {
  DomainSpec domain;
  Potential V;
  std::optional<PointFunction> W;
  DSpec D;
  double q = 6.0;
  double L_min = 16.0;
  std::vector<double> hs;

  BCSConfig config(double h) const {
    BCSConfig c;
    c.mask = build_domain(domain);
    c.V = V;
    c.W = sample(W, c.mask.grid());
    c.h = h;
    c.q = q;
    c.D = D.resolve(c.mask, c.W);
    return c;
  }
};

inline BCSSetup read_bcs_setup(ConfigReader& r, std::vector<double> default_h) {
  BCSSetup s;
  s.domain = read_domain(r);
  s.V = read_potential(r);
  s.W = read_field(r);
  s.D = read_D(r);
  s.q = r.number("q", 6.0);
  require(s.q > 0.0, "config.q must be positive");
  s.L_min = r.number("L_min", 16.0);
  s.hs = read_h_list(r, std::move(default_h));
  for (double h : s.hs) {
    BCSConfig c;
    c.mask = build_domain(s.domain);
    c.h = h;
    c.q = s.q;
    detail::check_bcs_config(c);
  }
  return s;
}

inline Job parse_bcs_trial(ConfigReader& r, const Context&) {
  BCSSetup s = read_bcs_setup(r, {0.1, 0.07, 0.05, 0.035});
  PsiSpec ps = read_psi(r);
  bool admissible = r.flag("check_admissible", true);
  bool export_kernels = r.flag("export_kernels", false);
  return [=] {
    RunOutput o;
    ScanReport rep;
    rep.columns = {"h",           "ell",          "energy_bcs_scaled", "energy_gp",    "diff",
                   "diff_signed", "diff_without_sqrt_h", "spectrum_min", "spectrum_max"};
    bool all_admissible = true;
    for (double h : s.hs) {
      BCSConfig cfg = s.config(h);
      const int d = cfg.mask.grid().dim();
      RelativeGroundState gs = bcs_relative(cfg, {}, s.L_min);
      RealField psi = make_psi(ps, cfg, gs);
      TrialOptions to;
      to.check_admissible = admissible;
      TrialState st = build_trial_state(cfg, gs, psi, to);
      BCSEnergy e = bcs_energy_terms(cfg, gs, st);
      const double scale = std::pow(h, d - 4);
      const double eb = e.total() * scale, egp = gp_reference_energy(cfg, gs, psi);
      const double plain = (e.total() - e.quartic * std::sqrt(h) / (1.0 + std::sqrt(h))) * scale;
      all_admissible = all_admissible && st.spectrum_min >= -1e-9 && st.spectrum_max <= 1.0 + 1e-9;
      rep.add_row({h, cfg.ell(), eb, egp, std::abs(eb - egp), eb - egp, plain - egp, st.spectrum_min, st.spectrum_max});
      if (export_kernels) {
        o.kernels.push_back({"alpha_h" + format_double(h), st.a_psi, h, "alpha"});
        o.kernels.push_back({"gamma_h" + format_double(h), st.gamma_psi, h, "gamma"});
      }
    }
    rep.sort_rows();
    rep.fits["diff"] = fit_power_law(rep.column("h"), rep.column("diff"));
    std::vector<double> plain;
    for (double v : rep.column("diff_without_sqrt_h")) plain.push_back(std::abs(v));
    if (std::all_of(plain.begin(), plain.end(), [](double v) { return v > 0.0; }))
      rep.fits["diff_without_sqrt_h"] = fit_power_law(rep.column("h"), plain);
    rep.summary = {{"admissible", all_admissible}, {"exponent", rep.fits["diff"].exponent}};
    o.results = rep.summary;
    o.scan = rep;
    return o;
  };
}

inline Job parse_semiclassics(ConfigReader& r, const Context&) {
  BCSSetup s = read_bcs_setup(r, {0.1, 0.07, 0.05, 0.035, 0.025, 0.02});
  PsiSpec ps = read_psi(r);
  return [=] {
    ScanReport rep;
    rep.columns = {"h",       "relative_spacing", "lhs_i",          "rhs_i",          "residual_i",
                   "lhs_ii",  "rhs_ii",           "residual_ii",    "lhs_iii_bcs",    "rhs_iii_bcs",
                   "residual_iii_bcs", "lhs_iii_0", "rhs_iii_0", "residual_iii_0"};
    bool quadrature_ok = true;
    for (double h : s.hs) {
      BCSConfig cfg = s.config(h);
      RelativeGroundState gs = bcs_relative(cfg, {}, s.L_min);
      RealField psi = make_psi(ps, cfg, gs);
      CutoffState cut = make_cutoff_state(gs, cfg.phi(), h);
      SemiclassicsRecord x = semiclassics_check(cfg, gs, psi, cut);
      const double ds = cfg.mask.grid().spacing(0) / h;
      quadrature_ok = quadrature_ok && x.residual_i <= ds * ds;
      rep.add_row({h, ds, x.lhs_i, x.rhs_i, x.residual_i, x.lhs_ii, x.rhs_ii, x.residual_ii, x.lhs_iii_bcs,
                   x.rhs_iii_bcs, x.residual_iii_bcs, x.lhs_iii_0, x.rhs_iii_0, x.residual_iii_0});
    }
    rep.sort_rows();
    json exps = json::object();
    for (const char* c : {"residual_ii", "residual_iii_bcs", "residual_iii_0"}) {
      auto y = rep.column(c);
      if (std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; })) {
        rep.fits[c] = fit_power_law(rep.column("h"), y);
        exps[c] = rep.fits[c].exponent;
      }
    }
    rep.summary = {{"part_i_within_quadrature", quadrature_ok}, {"exponents", exps}};
    RunOutput o;
    o.results = rep.summary;
    o.scan = rep;
    return o;
  };
}

inline Job parse_hardy(ConfigReader& r, const Context&) {
  DomainSpec ds = read_domain(r);
  require(ds.resizable, "config.domain: hardy refinements need a built-in domain");
  auto ns = r.integers("n_list");
  require(ns.size() >= 2, "config.n_list needs at least 2 grid sizes");
  for (int n : ns) require(n >= 5, "config.n_list entries must be at least 5");
  double lambda = r.number("lambda_offset", 0.0);
  double tol = r.number("tol", 1e-9);
  return [=] {
    ScanReport rep;
    rep.columns = {"dx", "n", "quotient", "constant"};
    for (int n : ns) {
      DomainMask m = build_domain(ds, n);
      HardyResult hr = hardy_quotient(m, lambda, tol);
      rep.add_row({m.grid().spacing(0), static_cast<double>(n), hr.mu, hr.constant});
    }
    rep.sort_rows();
    auto q = rep.column("quotient");
    bool below = std::all_of(q.begin(), q.end(), [](double v) { return v <= 4.0; });
    bool increasing = true;  // rows run from fine to coarse
    for (std::size_t i = 1; i < q.size(); ++i) increasing = increasing && q[i - 1] >= q[i];
    rep.summary = {{"max_quotient", *std::max_element(q.begin(), q.end())},
                   {"all_at_most_4", below},
                   {"increasing_under_refinement", increasing}};
    RunOutput o;
    o.results = rep.summary;
    o.scan = rep;
    return o;
  };
}

inline Job parse_density(ConfigReader& r, const Context&) {
  BCSSetup s = read_bcs_setup(r, {0.1, 0.07, 0.05});
  GPOptions opt;
  opt.tol = r.number("tol", 1e-9);
  return [=] {
    // psi_* minimizes the GP functional on the domain with g_BCS from the
    // finest relative lattice of the scan.
    BCSConfig ref = s.config(s.hs.back());
    const int d = ref.mask.grid().dim();
    RelativeGroundState gref = bcs_relative(ref, {}, s.L_min);
    std::optional<RealField> Wh;
    if (ref.W) Wh = half_lattice_field(*ref.W);
    GPSolution star = minimize_gp(GPProblem(half_lattice_mask(ref.mask), ref.D, gref.g_bcs, Wh), opt);
    RealField mode = compute_dc(ref.mask).eigenvector;
    RealField mode_half = half_lattice_field(mode);
    const double wX = star.psi.grid.weight();
    double ref_one = 0.0, ref_mode = 0.0;
    for (std::size_t k = 0; k < star.psi.size(); ++k) {
      double v = star.psi.values[k] * star.psi.values[k] * wX;
      ref_one += v;
      ref_mode += v * mode_half.values[k];
    }
    ScanReport rep;
    rep.columns = {"h", "ell", "particle_number", "reference_number", "error_one", "mode_pairing", "mode_reference",
                   "error_mode", "relative_number_error"};
    for (double h : s.hs) {
      BCSConfig cfg = s.config(h);
      RelativeGroundState gs = bcs_relative(cfg, {}, s.L_min);
      DomainMask sup = trial_support(cfg);
      require(!sup.empty(), "density: the domain eroded by ell(h) is empty");
      GPSolution sol = minimize_gp(GPProblem(sup, cfg.D, gs.g_bcs, Wh), opt);
      TrialState st = build_trial_state(cfg, gs, sol.psi);
      RealField rho = one_body_density(st);
      const double scale = std::pow(h, d - 2);
      const double n1 = scale * integrate(rho), n2 = scale * inner_product(rho, mode);
      rep.add_row({h, cfg.ell(), n1, ref_one, std::abs(n1 - ref_one), n2, ref_mode, std::abs(n2 - ref_mode),
                   std::abs(n1 - ref_one) / ref_one});
    }
    rep.sort_rows();
    auto e1 = rep.column("error_one"), e2 = rep.column("error_mode");
    bool mono = true;
    for (std::size_t i = 1; i < e1.size(); ++i) mono = mono && e1[i - 1] < e1[i] && e2[i - 1] < e2[i];
    rep.summary = {{"monotone_error_decrease", mono}, {"finest_relative_number_error", rep.rows.front().back()}};
    RunOutput o;
    o.results = rep.summary;
    o.scan = rep;
    return o;
  };
}

struct ParsedRun {
  json resolved;
  Job job;
};

inline ParsedRun parse_checked(const std::string& experiment, const json& config, const Context& ctx);

// Validates the config of an experiment; throws UsageError on any problem.
inline ParsedRun parse(const std::string& experiment, const json& config, const Context& ctx) {
  try {
    return parse_checked(experiment, config, ctx);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
}

inline ParsedRun parse_checked(const std::string& experiment, const json& config, const Context& ctx) {
  ConfigReader r(config, "config");
  if (r.has("experiment")) require(r.text("experiment") == experiment, "config.experiment does not match the command");
  r.set_resolved("experiment", experiment);
  Job job;
  if (experiment == "dc") job = parse_dc(r, ctx);
  else if (experiment == "relative") job = parse_relative(r, ctx);
  else if (experiment == "gp-min") job = parse_gp_min(r, ctx);
  else if (experiment == "continuity") job = parse_continuity(r, ctx);
  else if (experiment == "twobody-scan") job = parse_twobody(r, ctx);
  else if (experiment == "bcs-trial") job = parse_bcs_trial(r, ctx);
  else if (experiment == "semiclassics") job = parse_semiclassics(r, ctx);
  else if (experiment == "hardy") job = parse_hardy(r, ctx);
  else if (experiment == "density") job = parse_density(r, ctx);
  else throw UsageError("unknown experiment '" + experiment + "'");
  r.finish();
  return ParsedRun{r.resolved(), std::move(job)};
}

inline json make_report(const std::string& experiment, const ParsedRun& run, const RunOutput& out, const Context& ctx,
                        bool test_mode, double wall_time) {
  json rep{{"experiment", experiment},
           {"config", run.resolved},
           {"results", out.results},
           {"metadata", {{"version", PAIRCOND_VERSION}, {"seed", ctx.seed}, {"threads", ctx.threads}, {"test_mode", test_mode}}}};
  if (!test_mode) rep["metadata"]["wall_time_s"] = wall_time;
  if (out.scan) rep["scan"] = out.scan->to_json();
  return rep;
}

}  // namespace paircond::cli
