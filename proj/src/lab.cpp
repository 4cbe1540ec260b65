#include "driftlab/lab.hpp"

#include "orbit_solver.hpp"

#include <chrono>
#include <cstring>
#include <filesystem>
#include <set>

namespace driftlab {

const char* version() { return "0.1.0"; }

namespace {

// ---------------------------------------------------------------------------------------------
// config parsing

[[noreturn]] void config_fail(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) config_fail(where + " must be a table");
  std::set<std::string> ok;
  for (const char* a : allowed) ok.insert(a);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) config_fail("unknown key " + where + "." + it.key());
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    config_fail(std::string("bad value for ") + key + ": " + e.what());
  }
}

Band read_band(const json& j, const char* key, Band def) {
  if (!j.contains(key)) return def;
  const json& b = j.at(key);
  if (!b.is_array() || b.size() != 2 || !b[0].is_number() || !b[1].is_number())
    config_fail(std::string(key) + " must be [lo, hi]");
  Band out{b[0].get<double>(), b[1].get<double>()};
  if (!(out.lo < out.hi)) config_fail(std::string(key) + " needs lo < hi");
  return out;
}

CurveSpec read_curve(const json& j, const char* key, CurveSpec def) {
  if (!j.contains(key)) return def;
  const json& c = j.at(key);
  CurveSpec out;
  if (c.is_number()) {
    out.constant = c.get<double>();
  } else if (c.is_array()) {
    read(j, key, out.samples);
  } else if (c.is_object()) {
    check_keys(c, key, {"constant", "samples"});
    read(c, "constant", out.constant);
    read(c, "samples", out.samples);
  } else {
    config_fail(std::string(key) + " must be a number, a sample list or a table");
  }
  if (!out.samples.empty() && out.samples.size() < 3) config_fail(std::string(key) + " needs at least 3 samples");
  return out;
}

SyntheticSpec read_synthetic(const json& j) {
  check_keys(j, "synthetic", {"rotation", "twist", "copy_f0", "domain", "lifts"});
  SyntheticSpec s;
  read(j, "rotation", s.rotation);
  read(j, "twist", s.twist);
  read(j, "copy_f0", s.copy_f0);
  s.domain = read_band(j, "domain", s.domain);
  if (j.contains("lifts")) {
    if (!j["lifts"].is_array()) config_fail("synthetic.lifts must be a list");
    for (const auto& l : j["lifts"]) {
      check_keys(l, "synthetic.lifts[]", {"lo", "hi", "ramp", "amplitude", "barrier", "barrier_width"});
      LiftSpec L;
      read(l, "lo", L.lo);
      read(l, "hi", L.hi);
      read(l, "ramp", L.ramp);
      read(l, "amplitude", L.amplitude);
      read(l, "barrier", L.barrier);
      read(l, "barrier_width", L.barrier_width);
      s.lifts.push_back(L);
    }
  }
  return s;
}

}  // namespace

EssentialCurve CurveSpec::make(int n) const {
  if (samples.empty()) return EssentialCurve::constant(constant, n);
  const std::vector<double> s = samples;
  return EssentialCurve::sampled(
      [s](double phi) {
        const double u = reduce_angle(phi) / kTwoPi * static_cast<double>(s.size());
        const std::size_t i = static_cast<std::size_t>(u) % s.size();
        const double f = u - std::floor(u);
        return (1.0 - f) * s[i] + f * s[(i + 1) % s.size()];
      },
      n);
}

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "config", {"name", "map", "band", "sub_band", "grid", "cylinder", "delta", "homoclinic_count",
                           "transport", "shadowing", "check", "synthetic", "family", "seed", "threads", "tol",
                           "output_dir"});
  ExperimentConfig c;
  c.source = j;
  read(j, "name", c.name);
  if (j.contains("map")) c.map = map_from_json(j["map"]);
  c.band = read_band(j, "band", c.band);
  c.sub_band = read_band(j, "sub_band", c.sub_band);
  if (c.sub_band.lo < c.band.lo || c.sub_band.hi > c.band.hi) config_fail("sub_band must lie inside band");
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, "grid", {"cyl_phi", "cyl_I", "B_phi", "B_I"});
    read(g, "cyl_phi", c.grid.cyl_phi);
    read(g, "cyl_I", c.grid.cyl_I);
    read(g, "B_phi", c.grid.B_phi);
    read(g, "B_I", c.grid.B_I);
  }
  if (c.grid.cyl_phi < 8 || c.grid.cyl_I < 4 || c.grid.B_phi < 4 || c.grid.B_I < 2) config_fail("grid too small");
  if (j.contains("cylinder")) {
    check_keys(j["cylinder"], "cylinder", {"tol", "max_iter"});
    read(j["cylinder"], "tol", c.cylinder.tol);
    read(j["cylinder"], "max_iter", c.cylinder.max_iter);
  }
  read(j, "delta", c.delta);
  if (!(c.delta > 0.0)) config_fail("delta must be positive");
  read(j, "homoclinic_count", c.homoclinic_count);
  if (c.homoclinic_count < 1) config_fail("homoclinic_count must be >= 1");
  if (j.contains("transport")) {
    const json& t = j["transport"];
    check_keys(t, "transport", {"gamma_minus", "gamma_plus", "samples", "tol", "max_gen"});
    c.transport.gamma_minus = read_curve(t, "gamma_minus", c.transport.gamma_minus);
    c.transport.gamma_plus = read_curve(t, "gamma_plus", c.transport.gamma_plus);
    read(t, "samples", c.transport.samples);
    read(t, "tol", c.transport.tol);
    read(t, "max_gen", c.transport.max_gen);
  }
  if (c.transport.samples < 16) config_fail("transport.samples must be >= 16");
  if (j.contains("shadowing")) {
    const json& s = j["shadowing"];
    check_keys(s, "shadowing",
               {"k_bar", "gamma_rate", "D", "epsilon", "target_dI", "return_radius", "start_tol"});
    read(s, "k_bar", c.shadowing.k_bar);
    read(s, "gamma_rate", c.shadowing.gamma_rate);
    read(s, "D", c.shadowing.D);
    read(s, "epsilon", c.shadowing.epsilon);
    read(s, "target_dI", c.shadowing.target_dI);
    read(s, "return_radius", c.shadowing.return_radius);
    read(s, "start_tol", c.shadowing.start_tol);
  }
  if (j.contains("check")) {
    const json& k = j["check"];
    check_keys(k, "check",
               {"n_points", "symplectic_tol", "exact_tol", "quadrature", "homoclinic", "lambda_iterations"});
    read(k, "n_points", c.check.n_points);
    read(k, "symplectic_tol", c.check.symplectic_tol);
    read(k, "exact_tol", c.check.exact_tol);
    read(k, "quadrature", c.check.quadrature);
    read(k, "homoclinic", c.check.homoclinic);
    read(k, "lambda_iterations", c.check.lambda_iterations);
  }
  if (j.contains("synthetic") && !j["synthetic"].is_null()) c.synthetic = read_synthetic(j["synthetic"]);
  if (j.contains("family")) {
    const json& f = j["family"];
    check_keys(f, "family", {"steps", "mu1", "mu2"});
    if (f.contains("steps"))
      for (const auto& s : f["steps"]) c.family.steps.push_back(step_from_json(s));
    read(f, "mu1", c.family.mu1);
    read(f, "mu2", c.family.mu2);
    if (c.family.steps.size() > 2) config_fail("family supports at most two steps");
  }
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  if (c.threads < 1) config_fail("threads must be >= 1");
  read(j, "tol", c.tol_override);
  read(j, "output_dir", c.output_dir);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_fail(path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------------------------

json RunManifest::to_json(bool with_timings) const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["versions"] = {{"driftlab", version()},    {"map_core", version()},      {"nhim", version()},
                   {"homoclinic", version()},  {"ifs_transport", version()}, {"shadowing", version()},
                   {"lab_cli", version()}};
  json st = json::array();
  for (const auto& s : stages) {
    json e = {{"name", s.name}, {"passed", s.passed}, {"detail", s.detail}, {"data", s.data}};
    if (with_timings) e["seconds"] = s.seconds;
    st.push_back(e);
  }
  j["stages"] = st;
  json a = json::array();
  for (const auto& f : artifacts) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
  j["artifacts"] = a;
  j["summary"] = summary;
  j["exit_code"] = exit_code;
  return j;
}

namespace {

std::string strip_code(const Error& e) {
  const std::string w = e.what();
  const std::size_t n = std::strlen(error_code_name(e.code())) + 2;
  return w.size() >= n ? w.substr(n) : w;
}

// Runs f(record) as a timed stage. Errors are re-thrown tagged with the stage name.
template <class F>
auto stage(RunManifest& m, const std::string& name, F&& f) {
  StageRecord rec;
  rec.name = name;
  rec.data = json::object();
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] {
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.stages.push_back(rec);
  };
  try {
    rec.passed = true;
    auto out = f(rec);
    finish();
    return out;
  } catch (const Error& e) {
    rec.passed = false;
    rec.detail = e.what();
    finish();
    throw Error(e.code(), "stage " + name + ": " + strip_code(e));
  }
}

void emit(RunManifest& m, const std::string& dir, const std::string& rel, const std::string& content) {
  const std::string sha = write_file((std::filesystem::path(dir) / rel).string(), content);
  m.artifacts.push_back({rel, sha});
}

json report_json(const CheckReport& r) {
  return {{"name", r.name},           {"passed", r.passed},           {"max_residual", r.max_residual},
          {"tolerance", r.tolerance}, {"worst_index", r.worst_index}, {"detail", r.detail}};
}

json simplicity_json(const SimplicityReport& r) {
  return {{"s1", r.s1},
          {"s2", r.s2},
          {"s3", r.s3},
          {"max_condition", r.max_condition},
          {"min_det", r.min_det},
          {"min_separation", r.min_separation},
          {"detail", r.detail}};
}

json gap_json(const SpectralGapReport& g) {
  return {{"alpha", g.alpha}, {"lambda", g.lambda}, {"alpha2_lambda", g.product_check}, {"valid", g.valid}};
}

RunManifest start(const std::string& command, const ExperimentConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config_hash = sha256_hex(cfg.source.dump());
  m.summary = json::object();
  return m;
}

std::vector<Loop> check_loops() {
  return {
      [](double t) { return Vec4(kTwoPi * t, 0.2, 0.0, 0.0); },
      [](double t) {
        const double s = kTwoPi * t;
        return Vec4(s, 0.3 + 0.1 * std::sin(2 * s), 0.1 * std::cos(s), 0.2 * std::sin(s));
      },
      [](double t) {
        const double s = kTwoPi * t;
        return Vec4(0.5 + 0.1 * std::sin(s), 0.1, s, 0.3 + 0.2 * std::cos(s));
      },
      [](double t) {
        const double s = kTwoPi * t;
        return Vec4(1.0 + 0.3 * std::cos(s), 0.2 + 0.3 * std::sin(s), 1.0 + 0.2 * std::sin(2 * s),
                    -0.4 + 0.1 * std::cos(s));
      },
      [](double t) {
        const double s = kTwoPi * t;
        return Vec4(s, -0.2 + 0.05 * std::cos(3 * s), s + 0.3 * std::sin(s), 0.5 * std::sin(s));
      },
  };
}

// cylinder -> homoclinic cylinders -> scattering maps
struct Pipeline {
  CylinderGraph cyl;
  SpectralGapReport gap;
  std::vector<HomoclinicCylinder> Bs;
  std::vector<ScatteringMapSample> Fs;
  std::vector<SimplicityReport> simple;
};

CylinderGraph run_cylinder(RunManifest& m, const ExperimentConfig& cfg, const MapDef& map) {
  return stage(m, "cylinder", [&](StageRecord& r) {
    CylinderGraph c = compute_cylinder(map, cfg.band, cfg.grid.cyl_phi, cfg.grid.cyl_I, cfg.cylinder.tol,
                                       cfg.cylinder.max_iter);
    r.data = cylinder_sidecar(c);
    return c;
  });
}

SpectralGapReport run_gap(RunManifest& m, const ExperimentConfig& cfg, const MapDef& map, const CylinderGraph& c) {
  return stage(m, "spectral_gap", [&](StageRecord& r) {
    SpectralGapReport g = spectral_gap(map, c, Vec2(1.0, 0.1), &cfg.sub_band);
    r.data = gap_json(g);
    r.passed = g.valid;
    return g;
  });
}

Pipeline run_pipeline(RunManifest& m, const ExperimentConfig& cfg, const MapDef& map, bool need_simple) {
  Pipeline p;
  p.cyl = run_cylinder(m, cfg, map);
  p.gap = run_gap(m, cfg, map, p.cyl);
  p.Bs = stage(m, "homoclinic", [&](StageRecord& r) {
    HomoclinicPoint h = find_primary_homoclinic(p.cyl.saddle);
    std::vector<HomoclinicCylinder> Bs;
    Bs.push_back(build_homoclinic_cylinder(map, p.cyl, h, cfg.sub_band, cfg.grid.B_phi, cfg.grid.B_I, cfg.delta, 0));
    if (cfg.homoclinic_count > 1) {
      auto sec = generate_secondary(map, p.cyl, Bs[0], cfg.homoclinic_count - 1);
      for (auto& s : sec) Bs.push_back(std::move(s));
    }
    json list = json::array();
    for (const auto& B : Bs)
      list.push_back({{"id", B.id},
                      {"p_h", {B.hp.p_h[0], B.hp.p_h[1]}},
                      {"angle", B.hp.angle},
                      {"residual", B.max_residual},
                      {"m_minus", B.m_minus},
                      {"m_plus", B.m_plus}});
    r.data["cylinders"] = list;
    r.data["primary_residual"] = h.residual;
    r.data["primary_angle"] = h.angle;
    return Bs;
  });
  p.Fs = stage(m, "scattering", [&](StageRecord& r) {
    std::vector<ScatteringMapSample> Fs(p.Bs.size());
    for (std::size_t i = 0; i < p.Bs.size(); ++i) Fs[i] = scattering_map(map, p.cyl, p.Bs[i]);
    json list = json::array();
    double worst = 0.0;
    for (const auto& F : Fs) {
      list.push_back(scattering_sidecar(F));
      worst = std::max(worst, F.exactness_residual);
    }
    r.data["maps"] = list;
    r.passed = worst < 1e-6;
    if (!r.passed) r.detail = "scattering exactness residual " + fmt_g(worst);
    return Fs;
  });
  if (need_simple) {
    p.simple = stage(m, "simplicity", [&](StageRecord& r) {
      std::vector<SimplicityReport> out;
      json list = json::array();
      for (std::size_t i = 0; i < p.Bs.size(); ++i) {
        out.push_back(check_simplicity(map, p.cyl, p.Bs[i], p.Fs[i], cfg.sub_band, SimplicityOptions{4}));
        list.push_back(simplicity_json(out.back()));
        if (!out.back().simple()) {
          r.passed = false;
          r.detail += "cylinder " + std::to_string(p.Bs[i].id) + " not simple; ";
        }
      }
      r.data["reports"] = list;
      return out;
    });
  }
  return p;
}

double transport_tol(const ExperimentConfig& cfg) { return cfg.transport.tol; }

struct TransportRun {
  IFS ifs;
  EssentialCurve gm, gp;
  TransportCertificate cert;
  ValidationReport val;
};

TransportRun run_transport(RunManifest& m, const ExperimentConfig& cfg, IFS ifs) {
  TransportRun t;
  t.ifs = std::move(ifs);
  t.gm = cfg.transport.gamma_minus.make(cfg.transport.samples);
  t.gp = cfg.transport.gamma_plus.make(cfg.transport.samples);
  t.cert = stage(m, "transport", [&](StageRecord& r) {
    TransportOptions o;
    o.tol = transport_tol(cfg);
    o.max_gen = cfg.transport.max_gen;
    TransportCertificate c = birkhoff_transport(t.ifs, t.gm, t.gp, o);
    r.data = {{"outcome", outcome_name(c.outcome)}, {"generations", c.generations}, {"monotone", c.monotone}};
    return c;
  });
  t.val = stage(m, "validate_certificate", [&](StageRecord& r) {
    ValidationReport v = validate_certificate(t.cert, t.ifs, t.gm, t.gp, transport_tol(cfg));
    r.passed = v.ok;
    r.detail = v.diagnosis;
    r.data = {{"max_step_error", v.max_step_error}, {"max_residual", v.max_residual}};
    return v;
  });
  return t;
}

IFS build_ifs(RunManifest& m, const ExperimentConfig& cfg, const MapDef& map, Pipeline* keep) {
  if (cfg.synthetic) return make_synthetic_ifs(*cfg.synthetic);
  Pipeline p = run_pipeline(m, cfg, map, false);
  IFS ifs = make_cylinder_ifs(map, p.cyl, p.Fs, cfg.sub_band);
  if (keep) *keep = std::move(p);
  return ifs;
}

void emit_transport(RunManifest& m, const std::string& dir, const TransportRun& t) {
  emit(m, dir, "certificate.json", certificate_to_json(t.cert, t.ifs.names).dump(2) + "\n");
  emit(m, dir, "gamma_minus.csv", curve_csv(t.gm));
  emit(m, dir, "gamma_plus.csv", curve_csv(t.gp));
  if (t.cert.outcome == Outcome::Obstruction) emit(m, dir, "obstruction.csv", curve_csv(t.cert.obstruction));
  if (!t.cert.history.empty()) emit(m, dir, "final_envelope.csv", curve_csv(t.cert.history.back()));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < t.cert.connecting.size(); ++i) {
    const auto& s = t.cert.connecting[i];
    rows.push_back({static_cast<double>(i), s.v.phi, s.v.I, static_cast<double>(s.map_index)});
  }
  if (!rows.empty()) emit(m, dir, "connecting_orbit.csv", csv_table({"step", "phi", "I", "map_index"}, rows));
}

json transport_summary(const TransportRun& t) {
  json s = {{"outcome", outcome_name(t.cert.outcome)},
            {"generations", t.cert.generations},
            {"validated", t.val.ok},
            {"monotone", t.cert.monotone},
            {"max_step_error", t.val.max_step_error},
            {"max_residual", t.val.max_residual}};
  if (t.cert.outcome == Outcome::Connecting && !t.cert.connecting.empty())
    s["dI"] = t.cert.connecting.back().v.I - t.cert.connecting.front().v.I;
  return s;
}

// Extends the final F0 run of an IFS orbit to at least need steps. False when the endpoint would
// drop below gamma_plus - tol.
bool pad_final_block(std::vector<OrbitStep>& orbit, const IFS& ifs, int need, const EssentialCurve& gp, double tol) {
  if (orbit.empty()) return false;
  int run = 0;
  for (std::size_t i = orbit.size() - 1; i-- > 0;) {
    if (orbit[i].map_index != 0) break;
    ++run;
  }
  std::vector<OrbitStep> ext = orbit;
  for (; run < need; ++run) {
    ext.back().map_index = 0;
    const Vec2 w = ifs.maps[0](ext.back().v.vec());
    ext.push_back({{reduce_angle(w[0]), w[1]}, -1});
  }
  if (ext.back().v.I < gp.at(ext.back().v.phi) - tol) return false;
  orbit = std::move(ext);
  return true;
}

// per-step reproduction of a stored trajectory
double replay_error(const MapDef& map, const std::vector<Vec4>& P) {
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < P.size(); ++t)
    worst = std::max(worst, phase_diff(apply_lifted(map, P[t]), P[t + 1]).lpNorm<Eigen::Infinity>());
  return worst;
}

double replay_error(const IFS& ifs, const std::vector<OrbitStep>& orbit) {
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < orbit.size(); ++t) {
    const Vec2 w = ifs.maps[orbit[t].map_index](orbit[t].v.vec());
    worst = std::max(worst, cyl_dist({reduce_angle(w[0]), w[1]}, orbit[t + 1].v));
  }
  return worst;
}

// sup |I_t - I_0| over short orbits of random points in the band
double action_variation(const MapDef& map, Band band, std::uint64_t seed, int n_pts = 64, int n_iter = 200) {
  std::vector<PhasePoint> pts = random_points(n_pts, seed, band.lo, band.hi, -0.5, 0.5);
  std::vector<double> worst(pts.size(), 0.0);
  parallel_for(pts.size(), [&](std::size_t i) {
    Vec4 P = pts[i].vec();
    const double I0 = P[kI];
    for (int t = 0; t < n_iter; ++t) {
      P = apply_lifted(map, P);
      worst[i] = std::max(worst[i], std::abs(P[kI] - I0));
    }
  });
  return *std::max_element(worst.begin(), worst.end());
}

std::string csv_escape_free(const std::string& s) {
  std::string o = s;
  for (char& c : o)
    if (c == ',' || c == '\n') c = ';';
  return o;
}

}  // namespace

// ---------------------------------------------------------------------------------------------

static void do_check(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  const MapDef& map = cfg.map;
  std::vector<std::string> failed;
  json reports = json::array();

  // each check runs even when an earlier one failed
  auto guarded = [&](const std::string& name, auto&& f) {
    try {
      stage(m, name, f);
    } catch (const Error&) {
    }
    if (!m.stages.back().passed) failed.push_back(name);
  };

  guarded("symplectic", [&](StageRecord& r) {
    CheckReport c = check_symplectic(map, random_points(cfg.check.n_points, cfg.seed), cfg.check.symplectic_tol);
    r.passed = c.passed;
    r.detail = c.detail;
    r.data = report_json(c);
    return 0;
  });
  guarded("exactness", [&](StageRecord& r) {
    json list = json::array();
    double worst = 0.0;
    for (const auto& loop : check_loops()) {
      ExactnessReport e = check_exact(map, loop, cfg.check.quadrature, cfg.check.exact_tol);
      list.push_back({{"action_loop", e.action_loop},
                      {"action_image", e.action_image},
                      {"quad_error", e.quad_error},
                      {"passed", e.check.passed}});
      worst = std::max(worst, e.check.max_residual);
      if (!e.check.passed) r.passed = false;
    }
    r.data = {{"loops", list}, {"max_residual", worst}, {"tolerance", cfg.check.exact_tol}};
    return 0;
  });
  SaddleData saddle;
  guarded("saddle", [&](StageRecord& r) {
    const double k = map.normal_k();
    saddle = standard_saddle(k);
    // closed form for the Jacobian [[1+k, 1], [k, 1]] at the origin
    const double tr = 2.0 + k, disc = std::sqrt(tr * tr - 4.0);
    const double lu = 0.5 * (tr + disc), ls = 0.5 * (tr - disc);
    const double err = std::max(std::abs(saddle.lambda_u - lu), std::abs(saddle.lambda_s - ls));
    r.passed = err < 1e-9;
    r.data = {{"lambda_u", saddle.lambda_u}, {"lambda_s", saddle.lambda_s}, {"error", err}};
    return 0;
  });
  if (cfg.check.homoclinic)
    guarded("homoclinic_point", [&](StageRecord& r) {
      HomoclinicPoint h = find_primary_homoclinic(find_saddle(map.normal_k()));
      r.passed = h.residual < 1e-8 && h.angle > 1e-3;
      r.data = {{"p_h", {h.p_h[0], h.p_h[1]}}, {"residual", h.residual}, {"angle", h.angle}};
      return 0;
    });

  std::optional<CylinderGraph> cyl;
  guarded("cylinder", [&](StageRecord& r) {
    cyl = compute_cylinder(map, cfg.band, cfg.grid.cyl_phi, cfg.grid.cyl_I, cfg.cylinder.tol, cfg.cylinder.max_iter);
    r.data = cylinder_sidecar(*cyl);
    r.passed = cyl->residual <= cfg.cylinder.tol;
    return 0;
  });
  if (cyl) {
    guarded("spectral_gap", [&](StageRecord& r) {
      SpectralGapReport g = spectral_gap(map, *cyl, Vec2(1.0, 0.1), &cfg.sub_band);
      r.passed = g.valid;
      r.data = gap_json(g);
      return 0;
    });
    guarded("orthogonality", [&](StageRecord& r) {
      HomoclinicPoint h = find_primary_homoclinic(cyl->saddle);
      HomoclinicCylinder B =
          build_homoclinic_cylinder(map, *cyl, h, cfg.sub_band, cfg.grid.B_phi, cfg.grid.B_I, cfg.delta);
      OrthogonalityReport o = symplectic_orthogonality_check(map, *cyl, B, 8);
      r.passed = o.check.passed;
      r.detail = o.check.detail;
      r.data = report_json(o.check);
      r.data["min_det_omega_A"] = o.min_det_omega_A;
      return 0;
    });
    guarded("lambda_lemma", [&](StageRecord& r) {
      LambdaLemmaOptions lo;
      lo.sub = cfg.sub_band;
      LambdaLemmaReport L =
          lambda_lemma_check(map, *cyl, [](double, double, double) { return 0.1; }, cfg.check.lambda_iterations, lo);
      const double lam = cyl->saddle.lambda_s;
      double worst = 0.0;
      for (double q : L.ratios) worst = std::max(worst, std::abs(q / lam - 1.0));
      r.passed = L.graph_ok && static_cast<int>(L.ratios.size()) == cfg.check.lambda_iterations && worst < 0.2;
      r.detail = L.detail;
      r.data = {{"ratios", L.ratios}, {"lambda_s", lam}, {"worst_relative", worst}, {"graph_ok", L.graph_ok}};
      return 0;
    });
  } else {
    for (const char* n : {"spectral_gap", "orthogonality", "lambda_lemma"}) {
      m.stages.push_back({n, 0.0, false, "skipped: no cylinder", json::object()});
      failed.push_back(n);
    }
  }

  json stage_data = json::object();
  for (const auto& s : m.stages) stage_data[s.name] = {{"passed", s.passed}, {"data", s.data}};
  emit(m, out_dir, "check_report.json", stage_data.dump(2) + "\n");
  m.summary = {{"failed", failed}, {"first_failure", failed.empty() ? json(nullptr) : json(failed.front())}};
  if (!m.stages.empty() && m.stages.front().name == "symplectic")
    m.summary["symplectic_residual"] = m.stages.front().data.value("max_residual", 0.0);
  m.exit_code = failed.empty() ? kExitPass : kExitFailure;
}

static void do_cylinder(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  CylinderGraph c = run_cylinder(m, cfg, cfg.map);
  SpectralGapReport g = run_gap(m, cfg, cfg.map, c);
  emit(m, out_dir, "cylinder.csv", cylinder_csv(c));
  json side = cylinder_sidecar(c);
  side["spectral_gap"] = gap_json(g);
  emit(m, out_dir, "cylinder.json", side.dump(2) + "\n");
  m.summary = {{"residual", c.residual}, {"sup_norm", c.sup_norm()}, {"alpha", g.alpha}, {"lambda", g.lambda}};
  m.exit_code = g.valid ? kExitPass : kExitFailure;
}

static void do_scattering(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  Pipeline p = run_pipeline(m, cfg, cfg.map, true);
  emit(m, out_dir, "cylinder.csv", cylinder_csv(p.cyl));
  json maps = json::array();
  bool ok = p.gap.valid;
  for (std::size_t i = 0; i < p.Bs.size(); ++i) {
    const std::string tag = std::to_string(p.Bs[i].id);
    emit(m, out_dir, "homoclinic_cylinder_" + tag + ".csv", homoclinic_cylinder_csv(p.Bs[i]));
    emit(m, out_dir, "scattering_" + tag + ".csv", scattering_csv(p.Fs[i]));
    json side = scattering_sidecar(p.Fs[i]);
    side["simplicity"] = simplicity_json(p.simple[i]);
    side["m_minus"] = p.Bs[i].m_minus;
    side["m_plus"] = p.Bs[i].m_plus;
    emit(m, out_dir, "scattering_" + tag + ".json", side.dump(2) + "\n");
    maps.push_back({{"id", p.Bs[i].id},
                    {"sup_shift", p.Fs[i].sup_shift},
                    {"exactness_residual", p.Fs[i].exactness_residual},
                    {"simple", p.simple[i].simple()}});
    ok = ok && p.simple[i].simple() && p.Fs[i].exactness_residual < 1e-6;
  }
  m.summary = {{"maps", maps}};
  m.exit_code = ok ? kExitPass : kExitFailure;
}

static void do_transport(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  TransportRun t = run_transport(m, cfg, build_ifs(m, cfg, cfg.map, nullptr));
  emit_transport(m, out_dir, t);
  m.summary = transport_summary(t);
  m.exit_code = t.val.ok ? kExitPass : kExitFailure;
}

static void do_drift(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  Pipeline p;
  TransportRun t = run_transport(m, cfg, build_ifs(m, cfg, cfg.map, &p));
  emit_transport(m, out_dir, t);
  m.summary = transport_summary(t);
  if (!t.val.ok) {
    m.exit_code = kExitFailure;
    return;
  }
  if (t.cert.outcome == Outcome::Obstruction) {
    // correct negative: no drift across an invariant curve
    if (!cfg.synthetic) m.summary["action_variation"] = action_variation(cfg.map, cfg.sub_band, cfg.seed);
    m.summary["drift"] = "none";
    m.exit_code = kExitInconclusive;
    return;
  }

  if (cfg.synthetic) {
    // the IFS orbit is itself the drifting orbit
    const double err = stage(m, "replay", [&](StageRecord& r) {
      const double e = replay_error(t.ifs, t.cert.connecting);
      r.passed = e < 1e-8;
      r.data = {{"max_step_error", e}};
      return e;
    });
    const double dI = t.cert.connecting.back().v.I - t.cert.connecting.front().v.I;
    m.summary["replay_error"] = err;
    m.summary["dI"] = dI;
    m.summary["target_dI"] = cfg.shadowing.target_dI;
    m.exit_code = err >= 1e-8 ? kExitFailure : dI >= cfg.shadowing.target_dI ? kExitPass : kExitInconclusive;
    return;
  }

  const ShadowSystem sys = make_shadow_system(cfg.map, p.cyl, p.Bs, p.Fs, cfg.sub_band, true);
  ShadowOrbit sh = stage(m, "proper_code", [&](StageRecord& r) {
    std::vector<OrbitStep> orbit = t.cert.connecting;
    RawCode raw = raw_code_from_orbit(orbit);
    if (!raw.steps.empty()) {
      const int last_n = raw.steps.back().n;
      const int need = cfg.shadowing.k_bar + sys.m_plus[last_n - 1];
      const bool padded = pad_final_block(orbit, t.ifs, need, t.gp, t.cert.endpoint_tol);
      r.data["final_block_padded"] = padded;
      raw = raw_code_from_orbit(orbit);
    }
    ProperCodeOptions o;
    o.k_bar = cfg.shadowing.k_bar;
    o.gamma_rate = cfg.shadowing.gamma_rate;
    o.D = cfg.shadowing.D;
    o.radius = cfg.shadowing.return_radius;
    ShadowOrbit s = make_proper_code(raw, sys, orbit.front().v, cfg.shadowing.start_tol, o, &t.gm);
    r.data["code"] = code_to_json(s.code);
    r.data["start_error"] = s.start_error;
    r.data["consistency"] = s.max_consistency;
    r.passed = s.code.proper() && s.max_consistency < 1e-8;
    return s;
  });
  emit(m, out_dir, "code.json", code_to_json(sh.code).dump(2) + "\n");
  {
    std::vector<std::vector<double>> rows;
    for (std::size_t s = 0; s < sh.points.size(); ++s)
      rows.push_back({static_cast<double>(s), sh.points[s].phi, sh.points[s].I});
    emit(m, out_dir, "shadow_orbit.csv", csv_table({"station", "phi", "I"}, rows));
  }

  ChannelOrbit orb = stage(m, "channel_orbit", [&](StageRecord& r) {
    ChannelOrbit c = shoot_channel_orbit(cfg.map, p.cyl, p.Bs, sys, sh, p.gap, cfg.delta);
    r.data = {{"length", c.P.size()}, {"residual", c.residual}, {"bound", c.bound}, {"iterations", c.iterations}};
    return c;
  });
  emit(m, out_dir, "channel_orbit.csv", channel_orbit_csv(orb));

  ShadowingReport rep = stage(m, "verify_shadowing", [&](StageRecord& r) {
    ShadowingReport v = verify_shadowing(cfg.map, p.cyl, orb, sh, sys, p.gap, cfg.delta, cfg.shadowing.epsilon);
    r.passed = v.ok;
    r.detail = v.detail;
    r.data = {{"max_deviation", v.max_deviation}, {"bound", v.bound},          {"bound_kbar", v.bound_kbar},
              {"max_lamb_ratio", v.max_lamb_ratio}, {"max_defect", v.max_defect}, {"final_offset", v.final_offset},
              {"deviations", v.deviations}};
    return v;
  });
  const double err = stage(m, "replay", [&](StageRecord& r) {
    const double e = replay_error(cfg.map, orb.P);
    r.passed = e < 1e-8;
    r.data = {{"max_step_error", e}};
    return e;
  });
  const double dI = orb.P.back()[kI] - orb.P.front()[kI];
  m.summary["J"] = sh.code.J();
  m.summary["length"] = orb.P.size();
  m.summary["I_start"] = orb.P.front()[kI];
  m.summary["I_end"] = orb.P.back()[kI];
  m.summary["dI"] = dI;
  m.summary["target_dI"] = cfg.shadowing.target_dI;
  m.summary["replay_error"] = err;
  m.summary["shadowing_ok"] = rep.ok;
  m.summary["max_deviation"] = rep.max_deviation;
  m.summary["bound"] = rep.bound;
  if (!rep.ok || err >= 1e-8)
    m.exit_code = kExitFailure;
  else
    m.exit_code = dI >= cfg.shadowing.target_dI ? kExitPass : kExitInconclusive;
  return;
}

static void do_mu_scan(RunManifest& m, const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.family.steps.empty()) config_fail("mu-scan needs family.steps");
  std::vector<double> mu1 = cfg.family.mu1.empty() ? std::vector<double>{0.0} : cfg.family.mu1;
  std::vector<double> mu2 = cfg.family.mu2.empty() ? std::vector<double>{0.0} : cfg.family.mu2;
  const MapFamily fam = make_family(cfg.map, cfg.family.steps);

  std::string csv = "mu1,mu2,outcome,residual\n";
  json nodes = json::array();
  bool any_invalid = false;
  int counts[3] = {0, 0, 0};
  const auto t0 = std::chrono::steady_clock::now();
  for (double a : mu1)
    for (double b : mu2) {
      RunManifest sub = start("transport", cfg);
      std::string outcome = "Inconclusive", error;
      double residual = std::nan("");
      bool validated = false;
      try {
        const MapDef map = fam.evaluate(a, b);
        TransportRun t = run_transport(sub, cfg, build_ifs(sub, cfg, map, nullptr));
        outcome = outcome_name(t.cert.outcome);
        validated = t.val.ok;
        residual = t.cert.outcome == Outcome::Connecting ? t.val.max_step_error : t.val.max_residual;
        if (!validated) any_invalid = true;
      } catch (const Error& e) {
        error = e.what();
        if (e.code() == ErrorCode::ConfigError) throw;
      }
      counts[outcome == "Connecting" ? 0 : outcome == "Obstruction" ? 1 : 2]++;
      csv += num(a) + "," + num(b) + "," + outcome + "," + num(residual) + "\n";
      nodes.push_back({{"mu1", a},
                       {"mu2", b},
                       {"outcome", outcome},
                       {"validated", validated},
                       {"error", csv_escape_free(error)}});
    }
  StageRecord rec;
  rec.name = "scan";
  rec.passed = !any_invalid;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec.data = {{"nodes", nodes}};
  m.stages.push_back(rec);
  emit(m, out_dir, "mu_scan.csv", csv);
  m.summary = {{"rows", mu1.size() * mu2.size()},
               {"connecting", counts[0]},
               {"obstruction", counts[1]},
               {"inconclusive", counts[2]}};
  m.exit_code = any_invalid ? kExitFailure : kExitPass;
}

RunManifest cmd_check(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("check", cfg);
  do_check(m, cfg, out_dir);
  return m;
}

RunManifest cmd_cylinder(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("cylinder", cfg);
  do_cylinder(m, cfg, out_dir);
  return m;
}

RunManifest cmd_scattering(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("scattering", cfg);
  do_scattering(m, cfg, out_dir);
  return m;
}

RunManifest cmd_transport(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("transport", cfg);
  do_transport(m, cfg, out_dir);
  return m;
}

RunManifest cmd_drift(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("drift", cfg);
  do_drift(m, cfg, out_dir);
  return m;
}

RunManifest cmd_mu_scan(const ExperimentConfig& cfg, const std::string& out_dir) {
  RunManifest m = start("mu-scan", cfg);
  do_mu_scan(m, cfg, out_dir);
  return m;
}

RunManifest run_command(const std::string& command, const ExperimentConfig& cfg0, const std::string& out_dir) {
  ExperimentConfig cfg = cfg0;
  if (cfg.tol_override > 0.0) {
    if (command == "check") cfg.check.symplectic_tol = cfg.tol_override;
    else if (command == "cylinder" || command == "scattering") cfg.cylinder.tol = cfg.tol_override;
    else cfg.transport.tol = cfg.tol_override;
  }
  set_thread_count(cfg.threads);
  RunManifest m = start(command, cfg);
  try {
    if (command == "check") do_check(m, cfg, out_dir);
    else if (command == "cylinder") do_cylinder(m, cfg, out_dir);
    else if (command == "scattering") do_scattering(m, cfg, out_dir);
    else if (command == "transport") do_transport(m, cfg, out_dir);
    else if (command == "drift") do_drift(m, cfg, out_dir);
    else if (command == "mu-scan") do_mu_scan(m, cfg, out_dir);
    else config_fail("unknown command " + command);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    // stage failure: stages recorded so far stay in the manifest
    m.summary["error"] = e.what();
    m.summary["error_code"] = error_code_name(e.code());
    const bool inconclusive = e.code() == ErrorCode::GenerationLimit || e.code() == ErrorCode::BandOverflow;
    m.exit_code = inconclusive ? kExitInconclusive : kExitFailure;
  }
  write_file((std::filesystem::path(out_dir) / "manifest.json").string(), m.to_json().dump(2) + "\n");
  return m;
}

std::string plot_columns(const std::string& command) {
  std::string s;
  auto add = [&](const char* file, const char* cols) { s += std::string(file) + ": " + cols + "\n"; };
  if (command == "check") {
    add("check_report.json", "per-stage {passed, data}");
  } else if (command == "cylinder") {
    add("cylinder.csv", "1:phi 2:I 3:x 4:y");
    add("cylinder.json", "band, grid, residual, spectral_gap");
  } else if (command == "scattering") {
    add("cylinder.csv", "1:phi 2:I 3:x 4:y");
    add("homoclinic_cylinder_<id>.csv", "1:phi 2:I 3:x 4:y");
    add("scattering_<id>.csv", "1:phi 2:I 3:Psi 4:Y");
  } else if (command == "transport" || command == "drift") {
    add("gamma_minus.csv, gamma_plus.csv, obstruction.csv, final_envelope.csv",
        "1:phi 2:y 3:gen 4:map_index 5:preimage_phi");
    add("connecting_orbit.csv", "1:step 2:phi 3:I 4:map_index");
    if (command == "drift") {
      add("shadow_orbit.csv", "1:station 2:phi 3:I");
      add("channel_orbit.csv", "1:step 2:phi 3:I 4:x 5:y 6:station_flag 7:deviation");
    }
  } else if (command == "mu-scan") {
    add("mu_scan.csv", "1:mu1 2:mu2 3:outcome 4:residual");
  } else {
    config_fail("unknown command " + command);
  }
  return s;
}

}  // namespace driftlab
