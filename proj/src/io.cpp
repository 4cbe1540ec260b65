#include "driftlab/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace driftlab {

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoError, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot write " + path);
  f << content;
  if (!f) throw Error(ErrorCode::IoError, "write failed for " + path);
  return sha256_hex(content);
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (std::size_t i = 0; i < header.size(); ++i) s += (i ? "," : "") + header[i];
  s += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += ',';
      s += num(r[i]);
    }
    s += '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------------------------

json step_to_json(const PerturbationStep& s) {
  json terms = json::array();
  for (const auto& t : s.terms)
    terms.push_back({{"m", t.m}, {"n", t.n}, {"coeff", t.coeff}, {"basis", t.basis == Basis::Sin ? "sin" : "cos"}});
  return {{"epsilon", s.epsilon}, {"terms", terms}};
}

PerturbationStep step_from_json(const json& j) {
  try {
    PerturbationStep s;
    s.epsilon = j.at("epsilon").get<double>();
    for (const auto& t : j.at("terms")) {
      TrigTerm tt;
      tt.m = t.at("m").get<int>();
      tt.n = t.at("n").get<int>();
      tt.coeff = t.at("coeff").get<double>();
      const std::string b = t.value("basis", "sin");
      if (b == "sin") tt.basis = Basis::Sin;
      else if (b == "cos") tt.basis = Basis::Cos;
      else throw Error(ErrorCode::ConfigError, "basis must be sin or cos, got " + b);
      s.terms.push_back(tt);
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("perturbation step: ") + e.what());
  }
}

json map_to_json(const MapDef& m) {
  json j;
  j["kind"] = map_kind_name(m.kind);
  if (m.kind == MapKind::PerturbedComposite) j["base_kind"] = map_kind_name(m.base_kind);
  j["k"] = m.k;
  j["k1"] = m.k1;
  j["k2"] = m.k2;
  j["omega_coeffs"] = m.omega_coeffs;
  json p = json::array();
  for (const auto& s : m.perturbations) p.push_back(step_to_json(s));
  j["perturbations"] = p;
  if (m.defect.any()) j["defect"] = {{"y_scale", m.defect.y_scale}, {"I_shift", m.defect.I_shift}};
  return j;
}

MapDef map_from_json(const json& j) {
  try {
    MapDef m;
    const std::string kind = j.value("kind", std::string("ProductTwistStandard"));
    MapKind k;
    try {
      k = map_kind_from_name(kind);
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigError, "unknown map kind " + kind);
    }
    if (k == MapKind::DoubleStandard) {
      m = double_standard(j.value("k1", 0.5), j.value("k2", 4.0));
    } else {
      std::vector<double> om = j.value("omega_coeffs", std::vector<double>{0.0, 1.0});
      m = product_twist_standard(j.value("k", 4.0), om);
    }
    if (k == MapKind::PerturbedComposite && j.contains("base_kind") &&
        map_kind_from_name(j["base_kind"].get<std::string>()) == MapKind::DoubleStandard)
      m = double_standard(j.value("k1", 0.5), j.value("k2", 4.0));
    std::vector<PerturbationStep> steps;
    if (j.contains("perturbations"))
      for (const auto& s : j["perturbations"]) steps.push_back(step_from_json(s));
    if (!steps.empty() || k == MapKind::PerturbedComposite) m = perturbed(m, steps);
    if (j.contains("defect")) {
      m.defect.y_scale = j["defect"].value("y_scale", 1.0);
      m.defect.I_shift = j["defect"].value("I_shift", 0.0);
    }
    if (!(m.normal_k() > 0.0)) throw Error(ErrorCode::ConfigError, "standard-map strength must be positive");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("map: ") + e.what());
  }
}

// ---------------------------------------------------------------------------------------------

std::string cylinder_csv(const CylinderGraph& c) {
  std::vector<std::vector<double>> rows;
  for (int j = 0; j < c.g.n_I(); ++j)
    for (int i = 0; i < c.g.n_phi(); ++i) rows.push_back({c.g.phi_at(i), c.g.I_at(j), c.g.at(i, j, 0), c.g.at(i, j, 1)});
  return csv_table({"phi", "I", "x", "y"}, rows);
}

json cylinder_sidecar(const CylinderGraph& c) {
  return {{"band", {c.band.lo, c.band.hi}}, {"n_phi", c.g.n_phi()}, {"n_I", c.g.n_I()},
          {"residual", c.residual},        {"tol", c.tol},            {"sweeps", c.sweeps},
          {"interp", c.interp},            {"sup_norm", c.sup_norm()}};
}

std::string homoclinic_cylinder_csv(const HomoclinicCylinder& B) {
  std::vector<std::vector<double>> rows;
  for (const auto& P : B.points) rows.push_back({P[kPhi], P[kI], P[kX], P[kY]});
  return csv_table({"phi", "I", "x", "y"}, rows);
}

std::string scattering_csv(const ScatteringMapSample& F) {
  std::vector<std::vector<double>> rows;
  const GridField& d = F.disp;
  for (int j = 0; j < d.n_I(); ++j)
    for (int i = 0; i < d.n_phi(); ++i) {
      const double phi = d.phi_at(i), I = d.I_at(j);
      rows.push_back({phi, I, reduce_angle(phi + d.at(i, j, 0)), I + d.at(i, j, 1)});
    }
  return csv_table({"phi", "I", "Psi", "Y"}, rows);
}

json scattering_sidecar(const ScatteringMapSample& F) {
  return {{"id", F.id},
          {"shift", F.shift},
          {"domain", {F.domain.lo, F.domain.hi}},
          {"n_phi", F.disp.n_phi()},
          {"n_I", F.disp.n_I()},
          {"interp", F.interp},
          {"exactness_residual", F.exactness_residual},
          {"sup_shift", F.sup_shift}};
}

json certificate_to_json(const TransportCertificate& c, const std::vector<std::string>& map_names) {
  json j;
  j["outcome"] = outcome_name(c.outcome);
  j["generations"] = c.generations;
  j["endpoint_tol"] = c.endpoint_tol;
  j["monotone"] = c.monotone;
  json steps = json::array();
  for (const auto& s : c.connecting) steps.push_back({{"phi", s.v.phi}, {"I", s.v.I}, {"map_index", s.map_index}});
  j["steps"] = steps;
  if (c.outcome == Outcome::Obstruction)
    j["obstruction"] = {{"phis", c.obstruction.phis}, {"ys", c.obstruction.ys}, {"residuals", c.residuals}};
  else
    j["obstruction"] = nullptr;
  if (!map_names.empty()) j["maps"] = map_names;
  return j;
}

std::string curve_csv(const EssentialCurve& c) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.size(); ++i)
    rows.push_back({c.phis[i], c.ys[i], static_cast<double>(c.prov[i].gen), static_cast<double>(c.prov[i].map),
                    c.prov[i].pre_phi});
  return csv_table({"phi", "y", "gen", "map_index", "preimage_phi"}, rows);
}

json code_to_json(const Code& c) {
  json steps = json::array();
  for (const auto& s : c.steps) steps.push_back({{"n", s.n}, {"k", s.k}});
  return {{"k0", c.k0}, {"steps", steps}, {"k_bar", c.k_bar}, {"gamma_rate", c.gamma_rate}, {"D", c.D},
          {"proper", c.proper()}};
}

std::string channel_orbit_csv(const ChannelOrbit& o) {
  std::vector<std::vector<double>> rows;
  std::vector<int> flag(o.P.size(), -1);
  for (std::size_t s = 0; s < o.station.size(); ++s) flag[o.station[s]] = static_cast<int>(s);
  for (std::size_t t = 0; t < o.P.size(); ++t) {
    const double dev = flag[t] >= 0 && flag[t] < static_cast<int>(o.deviation.size()) ? o.deviation[flag[t]] : 0.0;
    rows.push_back({static_cast<double>(t), o.P[t][kPhi], o.P[t][kI], o.P[t][kX], o.P[t][kY],
                    static_cast<double>(flag[t]), dev});
  }
  return csv_table({"step", "phi", "I", "x", "y", "station_flag", "deviation"}, rows);
}

}  // namespace driftlab
