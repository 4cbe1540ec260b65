#include <doctest.h>

#include "driftlab.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#ifndef DRIFTLAB_CONFIG_DIR
#define DRIFTLAB_CONFIG_DIR "configs"
#endif

namespace {

std::string scratch(const char* name) {
  auto p = std::filesystem::temp_directory_path() / (std::string("driftlab_capi_") + name);
  std::filesystem::remove_all(p);
  return p.string();
}

const char* kMap = R"({"kind": "PerturbedComposite", "base_kind": "ProductTwistStandard", "k": 4.0,
  "perturbations": [{"epsilon": 0.01, "terms": [{"m": 1, "n": -1, "coeff": 1.0, "basis": "sin"}]}]})";

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(dl_version()) == "0.1.0");
  CHECK(std::string(dl_status_name(DL_OK)) == "Ok");
  CHECK(std::string(dl_status_name(DL_CONFIG_ERROR)) == "ConfigError");
  CHECK(std::string(dl_status_name(DL_GENERATION_LIMIT)) == "GenerationLimit");
  CHECK(std::string(dl_status_name(-5)) == "Unknown");
}

TEST_CASE("config handles") {
  dl_config* c = nullptr;
  CHECK(dl_config_parse("{not json", &c) == DL_CONFIG_ERROR);
  CHECK(c == nullptr);
  CHECK(std::strlen(dl_last_error()) > 0);
  CHECK(dl_config_parse(R"({"typo": 1})", &c) == DL_CONFIG_ERROR);
  CHECK(std::string(dl_last_error()).find("typo") != std::string::npos);
  CHECK(dl_config_load("/nonexistent.json", &c) == DL_CONFIG_ERROR);
  CHECK(dl_config_parse(nullptr, &c) == DL_INVALID_ARGUMENT);

  REQUIRE(dl_config_parse(R"({"output_dir": "somewhere"})", &c) == DL_OK);
  CHECK(std::string(dl_config_output_dir(c)) == "somewhere");
  CHECK(dl_config_set_threads(c, 2) == DL_OK);
  CHECK(dl_config_set_threads(c, 0) == DL_CONFIG_ERROR);
  CHECK(std::string(dl_config_output_dir(c)) == "somewhere");
  CHECK(dl_config_set_tol(c, -1.0) == DL_CONFIG_ERROR);
  CHECK(dl_config_set_seed(c, 42) == DL_OK);
  dl_config_free(c);
  dl_config_free(nullptr);
}

TEST_CASE("runs through the C API") {
  dl_config* c = nullptr;
  REQUIRE(dl_config_load(DRIFTLAB_CONFIG_DIR "/synthetic_lift.json", &c) == DL_OK);
  dl_manifest* m = nullptr;
  const std::string out = scratch("synthetic");
  REQUIRE(dl_run(c, "transport", out.c_str(), &m) == DL_OK);
  CHECK(dl_manifest_exit_code(m) == DL_EXIT_PASS);
  const std::string text = dl_manifest_json(m);
  CHECK(text.find("\"Connecting\"") != std::string::npos);
  CHECK(std::filesystem::exists(out + "/manifest.json"));
  CHECK(std::filesystem::exists(out + "/certificate.json"));
  dl_manifest_free(m);

  // same config, same manifest apart from timings: compare the config hash
  dl_manifest* m2 = nullptr;
  REQUIRE(dl_run(c, "transport", scratch("synthetic2").c_str(), &m2) == DL_OK);
  const std::string t2 = dl_manifest_json(m2);
  const auto hash = [](const std::string& s) { return s.substr(s.find("config_hash"), 80); };
  CHECK(hash(text) == hash(t2));
  dl_manifest_free(m2);

  CHECK(dl_run(c, "nonsense", out.c_str(), &m) == DL_CONFIG_ERROR);
  CHECK(m == nullptr);
  dl_config_free(c);

  REQUIRE(dl_config_load(DRIFTLAB_CONFIG_DIR "/broken.json", &c) == DL_OK);
  REQUIRE(dl_run(c, "check", scratch("broken").c_str(), &m) == DL_OK);
  CHECK(dl_manifest_exit_code(m) == DL_EXIT_FAILURE);
  dl_manifest_free(m);
  dl_config_free(c);

  const char* cols = nullptr;
  REQUIRE(dl_plot_columns("cylinder", &cols) == DL_OK);
  CHECK(std::string(cols).find("phi") != std::string::npos);
  CHECK(dl_plot_columns("bogus", &cols) == DL_CONFIG_ERROR);
}

TEST_CASE("map handles") {
  dl_map* m = nullptr;
  CHECK(dl_map_create(R"({"kind": "Nope"})", &m) == DL_CONFIG_ERROR);
  REQUIRE(dl_map_create(kMap, &m) == DL_OK);
  const double p[4] = {0.3, 0.2, 1.1, -0.4};
  double q[4], r[4], J[16];
  REQUIRE(dl_map_apply(m, p, q) == DL_OK);
  REQUIRE(dl_map_apply_inverse(m, q, r) == DL_OK);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(r[i] - p[i]) < 1e-12);
  // unperturbed normal factor: x' = x + y + k sin x up to the coupling
  CHECK(std::abs(q[2] - (p[2] + p[3] + 4.0 * std::sin(p[2]))) < 0.1);
  REQUIRE(dl_map_jacobian(m, p, J) == DL_OK);
  double det_guess = 0.0;
  for (double v : J) det_guess += std::abs(v);
  CHECK(det_guess > 0.0);
  double res = 1.0;
  REQUIRE(dl_map_symplectic_residual(m, 200, 7, &res) == DL_OK);
  CHECK(res < 1e-9);
  CHECK(dl_map_symplectic_residual(m, 0, 7, &res) == DL_INVALID_ARGUMENT);
  CHECK(dl_map_apply(nullptr, p, q) == DL_INVALID_ARGUMENT);
  dl_map_free(m);

  double lu = 0.0, ls = 0.0;
  REQUIRE(dl_standard_saddle(4.0, &lu, &ls) == DL_OK);
  CHECK(std::abs(lu - (3.0 + 2.0 * std::sqrt(2.0))) < 1e-12);
  CHECK(std::abs(ls - (3.0 - 2.0 * std::sqrt(2.0))) < 1e-12);
  CHECK(dl_standard_saddle(-1.0, &lu, &ls) == DL_INVALID_ARGUMENT);
}
