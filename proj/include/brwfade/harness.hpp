#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "brwfade/boundaries_stopping.hpp"
#include "brwfade/branching_env.hpp"
#include "brwfade/brw_engine.hpp"
#include "brwfade/heavy_tails.hpp"
#include "brwfade/montecarlo.hpp"
#include "json.hpp"

namespace brwfade {

/// One experiment: the four model blocks plus run parameters. Keys that only
/// some commands read (N, horizons, moments, example2, ...) stay in `extra`.
struct ExperimentConfig {
  IncrementLaw law = IncrementLaw::pareto(2.0);
  Environment env;
  Boundary boundary = Boundary::linear(1.0);
  StoppingRule stop = StoppingRule::fixed(1);
  std::optional<double> class_constant;
  std::vector<double> x_grid{10.0, 30.0, 100.0};
  std::int64_t runs = 10000;
  EstimatorKind mode = EstimatorKind::Auto;
  std::uint64_t seed = 1;
  int workers = 1;
  RunOptions run;
  nlohmann::json extra = nlohmann::json::object();

  /// c with g in G_c: the config value, else the largest one over the first generations.
  double c() const;
  WalkEngine engine() const;
  McOptions mc() const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Largest c with g(1) >= c and g(n + 1) - g(n) >= c for n < n_max.
double largest_class_constant(const Boundary& g, std::int64_t n_max = 10000);

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::size_t index(std::string_view column) const;
  double num(std::size_t row, std::string_view column) const;
  std::string str(std::size_t row, std::string_view column) const;
};

struct Report {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  Table table;
  bool within_hypotheses = true;
  std::string verdict;  // pass | fail | complete | outside hypotheses
  std::vector<std::string> notes;
};

/// Verdict computed from the table alone.
std::string table_verdict(std::string_view command, const Table& table);
/// table_verdict, overridden by "outside hypotheses" when the config was outside them.
std::string final_verdict(const Report& r);
/// 0 pass/complete, 2 outside hypotheses, 3 fail.
int exit_code(const Report& r);

void write_csv(std::ostream& os, const Report& r);
void write_json(std::ostream& os, const Report& r);
Report read_csv(std::istream& is);

Report cmd_simulate(const ExperimentConfig& cfg);
Report cmd_verify_theorem1(const ExperimentConfig& cfg);
Report cmd_verify_theorem2(const ExperimentConfig& cfg);
Report cmd_verify_theorem3(const ExperimentConfig& cfg);
Report cmd_moments(const ExperimentConfig& cfg);
Report cmd_example2(const ExperimentConfig& cfg);
Report cmd_supercritical_demo(const ExperimentConfig& cfg);
Report cmd_class_check(const ExperimentConfig& cfg);

/// Dispatch by subcommand name.
Report run_command(std::string_view command, const ExperimentConfig& cfg);

}  // namespace brwfade
