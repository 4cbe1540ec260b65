#pragma once

#include "driftlab/shadowing.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace driftlab {

using json = nlohmann::json;

std::string sha256_hex(const std::string& data);
/// Writes the file (creating parent directories) and returns its SHA-256.
std::string write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Round-trip number rendering for CSV.
std::string num(double v);
std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

json map_to_json(const MapDef& m);
/// Throws ConfigError on unknown kinds or malformed terms.
MapDef map_from_json(const json& j);
PerturbationStep step_from_json(const json& j);
json step_to_json(const PerturbationStep& s);

std::string cylinder_csv(const CylinderGraph& c);              // phi, I, x, y
json cylinder_sidecar(const CylinderGraph& c);
std::string homoclinic_cylinder_csv(const HomoclinicCylinder& B);  // phi, I, x, y
std::string scattering_csv(const ScatteringMapSample& F);           // phi, I, Psi, Y
json scattering_sidecar(const ScatteringMapSample& F);

json certificate_to_json(const TransportCertificate& c, const std::vector<std::string>& map_names = {});
/// phi, y, gen, map_index, preimage_phi
std::string curve_csv(const EssentialCurve& c);

json code_to_json(const Code& c);
/// step, phi, I, x, y, station_flag, deviation
std::string channel_orbit_csv(const ChannelOrbit& o);

}  // namespace driftlab
