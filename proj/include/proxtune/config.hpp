#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "proxtune/harness.hpp"

namespace proxtune {

// Sweep grids, read from the [sweep] section when a sweep command runs.
struct SweepConfig {
    std::vector<ScheduleKind> schedules;
    std::vector<double> lambda_max_values;
    std::vector<std::string> freeze_masks;  // unresolved mask expressions
};

struct ResolvedConfig {
    ExperimentConfig experiment;
    SweepConfig sweep;
    // [run] out_dir resolved against the config file's directory; empty when
    // the key was absent.
    std::filesystem::path out_dir;
};

// Parses the sectioned key=value config format. Unknown sections and keys
// are rejected with the offending name and line number (fail-closed).
ResolvedConfig load_config(const std::filesystem::path& path);
ResolvedConfig parse_config_text(const std::string& text,
                                 const std::filesystem::path& base_dir);

// Renders the fully resolved experiment (every default materialized) in the
// same format load_config accepts; written next to every command's outputs.
std::string render_manifest(const ResolvedConfig& config);

// Freeze-mask expression: '+'-joined module names, or "all" / "none".
FreezeMask resolve_freeze_mask(const std::string& expr, const ModelSpec& spec);

}  // namespace proxtune
