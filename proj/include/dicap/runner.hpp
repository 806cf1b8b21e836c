#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "dicap/config.hpp"

namespace dicap {

/// Machine-readable record of one experiment run, written as summary.json.
struct RunRecord {
  std::string command;
  std::string build_id;
  std::string status = "complete";  // "failed" on divergence or mid-run error
  std::string diagnostic;
  double wall_ms = 0.0;
  std::string config;  // canonical echo; re-parses to the executed config
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<std::string> artifacts;

  nlohmann::json to_json() const;
};

/// Dispatches the configured command, writes artifacts plus an atomically
/// renamed summary.json under the output directory, and returns the process
/// exit code: 0 iff a complete record was written, 1 when the run failed
/// mid-flight (a partial record flagged "failed" is still written).
/// Configuration errors throw std::invalid_argument before any record
/// exists.
int run_and_record(const ExperimentConfig& cfg);

}  // namespace dicap
