#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "karl/clock.hpp"
#include "karl/graph_json.hpp"

namespace karl {

struct StepResult {
  std::size_t index = 0;
  std::string op;
  bool ok = true;
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  std::vector<StepResult> steps;
  Json final_graph;
  Json permissions;
  /// Simulated time the run covered.
  Millis simulated_ms = 0;

  bool ok() const;
  std::size_t failures() const;
  Json to_json() const;
  /// One line per step, then a summary line.
  std::string text() const;
};

/// Runs a JSON scenario against an in-process hub on simulated time with
/// the fake internet. See README for the step vocabulary.
ScenarioReport run_scenario(const Json& scenario,
                            const std::optional<std::filesystem::path>& data_dir = std::nullopt);

ScenarioReport run_scenario_file(const std::filesystem::path& file,
                                 const std::optional<std::filesystem::path>& data_dir = std::nullopt);

}  // namespace karl
