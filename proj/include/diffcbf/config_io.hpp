#pragma once

#include <iosfwd>
#include <string>

#include "diffcbf/errors.hpp"
#include "diffcbf/sim.hpp"

namespace diffcbf {

/// Malformed configuration, located at a source line (1-based, 0 if unknown).
class ConfigError : public ValidationError {
 public:
  ConfigError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

/// Scenario from YAML (JSON is accepted as a YAML subset).
ScenarioConfig parse_scenario(const std::string& text, const std::string& source = "<string>");
ScenarioConfig load_scenario(const std::string& path);

/// Two posed bodies and a solve method for the `collide` command.
struct PairSpec {
  Body a;
  Body b;
  MinScaleMethod method = MinScaleMethod::Auto;
};

PairSpec parse_pair(const std::string& text, const std::string& source = "<string>");
PairSpec load_pair(const std::string& path);

void write_trajectory_csv(const TrajectoryLog& log, std::ostream& out);

/// Summary as JSON text. Timing fields live under "timing" so that
/// deterministic comparisons can drop that key.
std::string summary_json(const TrajectoryLog& log, int indent = 2);

}  // namespace diffcbf
