// Command-line entry point: generate datasets, train single runs, execute
// task x constraint grids, and merge run reports.
//
// Exit codes: 0 ok, 2 config/schema error, 3 I/O error, 4 numeric failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "crl/config.hpp"
#include "crl/container.hpp"
#include "crl/eval.hpp"
#include "crl/scm.hpp"
#include "crl/trainer.hpp"

namespace fs = std::filesystem;
using namespace crl;

namespace {

std::string resolve_config_path(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  const char* preset_dir = std::getenv("CRL_PRESET_DIR");
  if (preset_dir) {
    const fs::path p = fs::path(preset_dir) / (arg + ".json");
    if (fs::exists(p)) return p.string();
  }
  const fs::path local = fs::path("presets") / (arg + ".json");
  if (fs::exists(local)) return local.string();
  throw IoError("config '" + arg + "' not found (no file, and no preset under CRL_PRESET_DIR)");
}

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContainerVersionError& e) {
    std::cerr << "version error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ContainerFormatError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ContainerCorruptError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}

int cmd_generate(const std::string& config_arg, const std::string& out,
                 std::optional<std::uint64_t> seed) {
  CliConfig cfg = load_config_file(resolve_config_path(config_arg));
  if (seed) cfg.experiment.seed = *seed;
  Dataset ds = build_dataset(cfg.experiment.data, cfg.experiment.seed);
  save_dataset(out, ds);
  std::printf("dataset written to %s\n", out.c_str());
  std::printf("  latents d=%d observed n=%d episodes=%d time=%d\n", ds.d, ds.n, ds.episodes,
              ds.time_steps);
  std::printf("  spec_hash=%016llx seed=%llu\n", static_cast<unsigned long long>(ds.spec_hash),
              static_cast<unsigned long long>(ds.seed));
  return 0;
}

int cmd_train(const std::string& config_arg, std::optional<std::uint64_t> seed,
              const std::string& out_override) {
  CliConfig cfg = load_config_file(resolve_config_path(config_arg));
  if (seed) cfg.experiment.seed = *seed;
  if (!out_override.empty()) cfg.experiment.out_dir = out_override;
  RunRecord rec = train_run(cfg.experiment);
  std::printf("mcc=%.6f r2=%.6f\n", rec.final_eval.mcc, rec.final_eval.r2);
  if (!rec.record_path.empty()) std::printf("run directory: %s\n", cfg.experiment.out_dir.c_str());
  return 0;
}

int cmd_grid(const std::string& config_arg, int jobs, const std::string& format,
             std::optional<std::uint64_t> seed, const std::string& out_override) {
  CliConfig cfg = load_config_file(resolve_config_path(config_arg));
  if (!cfg.grid)
    throw ConfigError("grid command needs a 'grid' section in the config");
  if (seed) cfg.experiment.seed = *seed;
  std::string out_root = !out_override.empty()
                             ? out_override
                             : (!cfg.experiment.out_dir.empty() ? cfg.experiment.out_dir
                                                                : std::string("grid_out"));
  GridOutcome outcome = grid_run(cfg.experiment, *cfg.grid, jobs, out_root);

  const std::string csv = emit_report_csv(outcome.rows);
  const std::string md = emit_report_markdown(outcome.rows);
  atomic_write_text((fs::path(out_root) / "report.csv").string(), csv);
  atomic_write_text((fs::path(out_root) / "report.md").string(), md);
  std::fputs(format == "md" ? md.c_str() : csv.c_str(), stdout);

  int succeeded = 0;
  for (const auto& row : outcome.rows)
    if (!row.failed) ++succeeded;
  if (outcome.failed_cells > 0)
    std::fprintf(stderr, "%d grid cell(s) failed\n", outcome.failed_cells);
  return succeeded > 0 ? 0 : 4;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& format,
               const std::string& out) {
  struct Key {
    std::string task, constraint, method;
    bool operator<(const Key& o) const {
      if (task != o.task) return task < o.task;
      if (constraint != o.constraint) return constraint < o.constraint;
      return method < o.method;
    }
  };
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const std::string& dir : run_dirs) {
    const fs::path record = fs::path(dir) / "record.json";
    std::ifstream in(record);
    if (!in) throw IoError("no record.json under " + dir);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(record.string() + " is unreadable: " + std::string(e.what()));
    }
    if (j.value("schema_version", 0) != 1)
      throw ContainerVersionError(record.string() + ": incompatible record schema version");
    Key key{j.value("task", "?"), j.value("constraint", "?"), j.value("method", "?")};
    groups[key].first.push_back(j.at("final").at("mcc").get<double>());
    groups[key].second.push_back(j.at("final").at("r2").get<double>());
  }

  std::vector<ReportRow> rows;
  for (const auto& [key, vals] : groups) {
    auto mean_std = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      m /= static_cast<double>(v.size());
      double s2 = 0;
      for (double x : v) s2 += (x - m) * (x - m);
      return std::make_pair(m, v.size() > 1 ? std::sqrt(s2 / static_cast<double>(v.size() - 1))
                                            : 0.0);
    };
    ReportRow row;
    row.task = key.task;
    row.constraint = key.constraint;
    row.method = key.method;
    row.seeds = static_cast<int>(vals.first.size());
    std::tie(row.mcc_mean, row.mcc_std) = mean_std(vals.first);
    std::tie(row.r2_mean, row.r2_std) = mean_std(vals.second);
    rows.push_back(std::move(row));
  }

  const std::string text = format == "md" ? emit_report_markdown(rows) : emit_report_csv(rows);
  if (!out.empty())
    atomic_write_text(out, text);
  else
    std::fputs(text.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"composable representation-learning engine on synthetic SCM data"};
  app.require_subcommand(1);

  std::string config_arg, out_arg, format = "csv";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::vector<std::string> run_dirs;

  auto* gen = app.add_subcommand("generate", "generate a dataset from a config");
  gen->add_option("--config", config_arg, "config file or preset name")->required();
  gen->add_option("--out", out_arg, "output dataset path")->required();
  gen->add_option("--seed", seed, "seed override");

  auto* train = app.add_subcommand("train", "train one run and print MCC / R2");
  train->add_option("--config", config_arg, "config file or preset name")->required();
  train->add_option("--seed", seed, "seed override");
  train->add_option("--out", out_arg, "run directory override");

  auto* grid = app.add_subcommand("grid", "run a task x constraint grid");
  grid->add_option("--config", config_arg, "config file or preset name")->required();
  grid->add_option("--jobs", jobs, "parallel grid cells")->check(CLI::PositiveNumber);
  grid->add_option("--format", format, "stdout format")->check(CLI::IsMember({"csv", "md"}));
  grid->add_option("--seed", seed, "base seed override");
  grid->add_option("--out", out_arg, "output directory override");

  auto* report = app.add_subcommand("report", "merge run directories into one table");
  report->add_option("dirs", run_dirs, "run directories")->required();
  report->add_option("--format", format, "output format")->check(CLI::IsMember({"csv", "md"}));
  report->add_option("--out", out_arg, "write the table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return guarded([&] { return cmd_generate(config_arg, out_arg, seed); });
  if (train->parsed()) return guarded([&] { return cmd_train(config_arg, seed, out_arg); });
  if (grid->parsed())
    return guarded([&] { return cmd_grid(config_arg, jobs, format, seed, out_arg); });
  if (report->parsed()) return guarded([&] { return cmd_report(run_dirs, format, out_arg); });
  return 1;
}
