#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "brwfade/errors.hpp"
#include "brwfade/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> runs;
  std::optional<int> workers;
  std::string out;
  std::string format = "csv";
};

int run(const std::string& command, const Flags& f) {
  nlohmann::json j = nlohmann::json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw brwfade::ConfigError("cannot open " + f.config);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw brwfade::ConfigError(f.config + ": " + e.what());
    }
  }
  if (f.seed) j["seed"] = *f.seed;
  if (f.runs) j["runs"] = *f.runs;
  if (f.workers) j["workers"] = *f.workers;
  const auto cfg = brwfade::ExperimentConfig::from_json(j);
  const auto report = brwfade::run_command(command, cfg);

  const auto emit = [&](std::ostream& os) {
    if (f.format == "json") brwfade::write_json(os, report);
    else brwfade::write_csv(os, report);
  };
  if (f.out.empty()) {
    emit(std::cout);
  } else {
    std::filesystem::create_directories(f.out);
    const auto path = std::filesystem::path(f.out) / (command + "." + f.format);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw brwfade::ConfigError("cannot write " + path.string());
    emit(os);
    std::cerr << "wrote " << path.string() << '\n';
  }
  std::cerr << "verdict: " << report.verdict << '\n';
  return brwfade::exit_code(report);
}

int recheck(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw brwfade::ConfigError("cannot open " + path);
  auto report = brwfade::read_csv(in);
  const std::string stored = report.verdict;
  report.verdict = brwfade::final_verdict(report);
  std::cout << "stored: " << stored << "\nrecomputed: " << report.verdict << '\n';
  if (stored != report.verdict) {
    std::cerr << "verdict mismatch\n";
    return 3;
  }
  return brwfade::exit_code(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching random walks in fading environments: simulation and asymptotics"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::string> commands{"simulate",         "verify-theorem1", "verify-theorem2",
                                          "verify-theorem3",  "moments",         "example2",
                                          "supercritical-demo", "class-check"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : commands) {
    auto* s = app.add_subcommand(name);
    s->add_option("--config", flags.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    s->add_option("--seed", flags.seed, "master seed");
    s->add_option("--runs", flags.runs, "replications per estimate")->check(CLI::PositiveNumber);
    s->add_option("--workers", flags.workers, "worker threads")->check(CLI::PositiveNumber);
    s->add_option("--out", flags.out, "output directory (stdout when absent)");
    s->add_option("--format", flags.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    subs[name] = s;
  }
  std::string csv;
  auto* verdict = app.add_subcommand("verdict", "recompute the verdict of a CSV report");
  verdict->add_option("report", csv, "CSV report")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (verdict->parsed()) return recheck(csv);
    for (const auto& [name, s] : subs) {
      if (s->parsed()) return run(name, flags);
    }
  } catch (const brwfade::HypothesisViolation& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 1;
}
