// driftlab command-line runner; talks to the library through the C API only.
#include "driftlab.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
};

int report_error(int status) {
  std::cerr << "driftlab: " << dl_status_name(status) << ": " << dl_last_error() << "\n";
  return status == DL_CONFIG_ERROR ? DL_EXIT_CONFIG : DL_EXIT_FAILURE;
}

int run(const std::string& command, const RunArgs& a) {
  dl_config* cfg = nullptr;
  int rc = dl_config_load(a.config.c_str(), &cfg);
  if (rc != DL_OK) return report_error(rc);
  if (rc == DL_OK && a.threads) rc = dl_config_set_threads(cfg, *a.threads);
  if (rc == DL_OK && a.seed) rc = dl_config_set_seed(cfg, *a.seed);
  if (rc == DL_OK && a.tol) rc = dl_config_set_tol(cfg, *a.tol);
  if (rc != DL_OK) {
    dl_config_free(cfg);
    return report_error(rc);
  }
  const std::string out = a.out.empty() ? dl_config_output_dir(cfg) : a.out;
  dl_manifest* man = nullptr;
  rc = dl_run(cfg, command.c_str(), out.c_str(), &man);
  dl_config_free(cfg);
  if (rc != DL_OK) return report_error(rc);

  const int code = dl_manifest_exit_code(man);
  const auto j = nlohmann::json::parse(dl_manifest_json(man));
  dl_manifest_free(man);
  for (const auto& s : j["stages"]) {
    std::printf("%-22s %-4s %8.3fs", s["name"].get<std::string>().c_str(), s["passed"].get<bool>() ? "ok" : "FAIL",
                s.value("seconds", 0.0));
    const std::string d = s.value("detail", std::string());
    if (!d.empty()) std::printf("  %s", d.c_str());
    std::printf("\n");
  }
  std::printf("summary: %s\n", j["summary"].dump().c_str());
  std::printf("manifest: %s/manifest.json (exit %d)\n", out.c_str(), code);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlab: instability experiments for coupled twist/standard maps"};
  app.set_version_flag("--version", std::string(dl_version()));
  app.require_subcommand(1);

  RunArgs args;
  std::string chosen;
  for (const char* name : {"check", "cylinder", "scattering", "transport", "drift", "mu-scan"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory (default: config output_dir)");
    sub->add_option("--threads", args.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", args.seed, "random seed");
    sub->add_option("--tol", args.tol, "main tolerance of the command")->check(CLI::PositiveNumber);
    sub->callback([&chosen, name] { chosen = name; });
  }
  std::string columns_of;
  CLI::App* cols = app.add_subcommand("columns", "print column layout of a command's output files");
  cols->add_option("command", columns_of)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : DL_EXIT_CONFIG;
  }

  if (cols->parsed()) {
    const char* text = nullptr;
    const int rc = dl_plot_columns(columns_of.c_str(), &text);
    if (rc != DL_OK) return report_error(rc);
    std::fputs(text, stdout);
    return 0;
  }
  return run(chosen, args);
}
