#pragma once

// Text formats: JSON documents for environments, guesses, policies, outcomes
// and configs; one JSON object per line for datasets.

#include <filesystem>
#include <string>
#include <vector>

#include "skipq/config.hpp"
#include "skipq/design.hpp"
#include "skipq/envs.hpp"
#include "skipq/learner.hpp"
#include "skipq/mdp.hpp"

namespace skipq {

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string env_to_json(const Environment& env);
Environment env_from_json(const std::string& text);

std::string guesses_to_json(const std::vector<Guess>& guesses);
std::vector<Guess> guesses_from_json(const std::string& text);

std::string policy_to_json(const Policy& policy);
Policy policy_from_json(const std::string& text);

/// Report with the chosen guess, per-stage parameters, per-guess feasibility
/// and tightness, the optimistic value and the greedy policy table.
std::string outcome_to_json(const SolveOutcome& outcome);
/// Reads back the policy table of an outcome report.
Policy policy_from_outcome_json(const std::string& text);

std::string config_to_json(const ExperimentConfig& config);
/// Missing fields keep their defaults; unknown keys and wrong types raise ParseError.
ExperimentConfig config_from_json(const std::string& text);

/// One line {"steps": [[s,a,r],...], "features": [[[...],...],...]} with reals printed to 17 significant digits.
std::string trajectory_to_line(const Trajectory& traj);
/// `line_number` is reported in the ParseError raised for malformed input.
Trajectory trajectory_from_line(const std::string& line, std::size_t line_number);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// %.17g
std::string format_real(double x);

}  // namespace skipq
