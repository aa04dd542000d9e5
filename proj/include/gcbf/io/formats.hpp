#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gcbf/eval/audit.hpp"
#include "gcbf/eval/experiments.hpp"
#include "gcbf/train/trainer.hpp"

namespace gcbf::io {

// Writes through <path>.tmp and renames into place.
void atomic_write(const std::filesystem::path& path, const std::string& content);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string metrics_csv(const std::vector<eval::Metrics>& rows);
std::string loss_csv(const std::vector<train::StepRecord>& curve);
// step, wall seconds: kept apart so the other files are byte-reproducible.
std::string timing_csv(const std::vector<train::StepRecord>& curve);
std::string sweep_csv(const std::vector<eval::SweepCell>& cells);
std::string scaling_timing_csv(const std::vector<eval::ScalingPoint>& points);
// One JSON object per line: a summary line, then one line per recorded event.
std::string theorem1_jsonl(const std::vector<eval::Theorem1Report>& reports);
std::string assumption1_jsonl(const eval::Assumption1Report& rep, double sense_radius);
std::string outcomes_jsonl(const std::vector<eval::InstanceOutcome>& outcomes);

}  // namespace gcbf::io
