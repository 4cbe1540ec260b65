#include "driftlab.h"

#include "driftlab/lab.hpp"

#include <string>

using namespace driftlab;

struct dl_config {
  json source;
  ExperimentConfig cfg;
};

struct dl_manifest {
  RunManifest m;
  std::string text;
};

struct dl_map {
  MapDef def;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_columns;

int fail(int code, const std::string& msg) {
  g_error = msg;
  return code;
}

template <class F>
int guard(F&& f) {
  g_error.clear();
  try {
    f();
    return DL_OK;
  } catch (const Error& e) {
    return fail(static_cast<int>(e.code()), e.what());
  } catch (const std::exception& e) {
    return fail(DL_INTERNAL, e.what());
  } catch (...) {
    return fail(DL_INTERNAL, "unknown exception");
  }
}

int null_arg(const char* what) { return fail(DL_INVALID_ARGUMENT, std::string("null argument: ") + what); }

// applies one key; the handle is unchanged when the result does not parse
int update(dl_config* c, const char* key, const json& value) {
  return guard([&] {
    json next = c->source;
    next[key] = value;
    c->cfg = parse_config(next);
    c->source = std::move(next);
  });
}

}  // namespace

extern "C" {

const char* dl_version(void) { return version(); }

const char* dl_status_name(int status) {
  if (status == DL_INTERNAL) return "Internal";
  if (status < 0 || status > DL_IO_ERROR) return "Unknown";
  return error_code_name(static_cast<ErrorCode>(status));
}

const char* dl_last_error(void) { return g_error.c_str(); }

int dl_config_parse(const char* json_text, dl_config** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] {
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
    auto c = std::make_unique<dl_config>();
    c->source = j;
    c->cfg = parse_config(j);
    *out = c.release();
  });
}

int dl_config_load(const char* path, dl_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  *out = nullptr;
  std::string text;
  const int rc = guard([&] {
    try {
      text = read_file(path);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
  });
  if (rc != DL_OK) return rc;
  return dl_config_parse(text.c_str(), out);
}

int dl_config_set_threads(dl_config* cfg, unsigned threads) {
  if (!cfg) return null_arg("cfg");
  return update(cfg, "threads", threads);
}

int dl_config_set_seed(dl_config* cfg, uint64_t seed) {
  if (!cfg) return null_arg("cfg");
  return update(cfg, "seed", seed);
}

int dl_config_set_tol(dl_config* cfg, double tol) {
  if (!cfg) return null_arg("cfg");
  if (!(tol > 0.0)) return fail(DL_CONFIG_ERROR, "tol must be positive");
  return update(cfg, "tol", tol);
}

const char* dl_config_output_dir(const dl_config* cfg) { return cfg ? cfg->cfg.output_dir.c_str() : ""; }

void dl_config_free(dl_config* cfg) { delete cfg; }

int dl_run(const dl_config* cfg, const char* command, const char* out_dir, dl_manifest** out) {
  if (!cfg) return null_arg("cfg");
  if (!command) return null_arg("command");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] {
    auto m = std::make_unique<dl_manifest>();
    m->m = run_command(command, cfg->cfg, out_dir ? out_dir : cfg->cfg.output_dir);
    m->text = m->m.to_json().dump(2);
    *out = m.release();
  });
}

int dl_manifest_exit_code(const dl_manifest* m) { return m ? m->m.exit_code : DL_EXIT_FAILURE; }

const char* dl_manifest_json(const dl_manifest* m) { return m ? m->text.c_str() : ""; }

void dl_manifest_free(dl_manifest* m) { delete m; }

int dl_plot_columns(const char* command, const char** text) {
  if (!command) return null_arg("command");
  if (!text) return null_arg("text");
  return guard([&] {
    g_columns = plot_columns(command);
    *text = g_columns.c_str();
  });
}

int dl_map_create(const char* json_text, dl_map** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guard([&] {
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
    auto m = std::make_unique<dl_map>();
    m->def = map_from_json(j);
    *out = m.release();
  });
}

void dl_map_free(dl_map* map) { delete map; }

int dl_map_apply(const dl_map* map, const double in[4], double out[4]) {
  if (!map || !in || !out) return null_arg("map/in/out");
  return guard([&] {
    Vec4 r = apply_lifted(map->def, Vec4(in[0], in[1], in[2], in[3]));
    for (int i = 0; i < 4; ++i) out[i] = r[i];
  });
}

int dl_map_apply_inverse(const dl_map* map, const double in[4], double out[4]) {
  if (!map || !in || !out) return null_arg("map/in/out");
  return guard([&] {
    Vec4 r = apply_inverse_lifted(map->def, Vec4(in[0], in[1], in[2], in[3]));
    for (int i = 0; i < 4; ++i) out[i] = r[i];
  });
}

int dl_map_jacobian(const dl_map* map, const double in[4], double out[16]) {
  if (!map || !in || !out) return null_arg("map/in/out");
  return guard([&] {
    Mat4 J = jacobian(map->def, Vec4(in[0], in[1], in[2], in[3]));
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out[4 * r + c] = J(r, c);
  });
}

int dl_map_symplectic_residual(const dl_map* map, size_t n, uint64_t seed, double* residual) {
  if (!map || !residual) return null_arg("map/residual");
  if (n == 0) return fail(DL_INVALID_ARGUMENT, "n must be positive");
  return guard([&] { *residual = check_symplectic(map->def, random_points(n, seed), 1.0).max_residual; });
}

int dl_standard_saddle(double k, double* lambda_u, double* lambda_s) {
  if (!lambda_u || !lambda_s) return null_arg("lambda_u/lambda_s");
  return guard([&] {
    SaddleData s = standard_saddle(k);
    *lambda_u = s.lambda_u;
    *lambda_s = s.lambda_s;
  });
}

}  // extern "C"
