#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace proxtune {

// One named tensor of trainable values plus the pretrained snapshot it is
// kept close to. `module_index` is the 1-based position of the owning module
// in the ordered module stack.
struct ParameterGroup {
    std::string name;
    std::vector<double> values;
    std::vector<double> snapshot;
    int module_index = 1;
    bool frozen = false;
    bool from_scratch = false;
};

struct ModelParameters {
    std::vector<ParameterGroup> groups;
    int module_count = 0;
    // Bumped on every values mutation; forward caches record it so that
    // backward can reject a cache built from different parameters.
    std::uint64_t version = 0;

    std::size_t total_size() const;
    const ParameterGroup* find(const std::string& name) const;
};

// Set of module indices excluded from training.
struct FreezeMask {
    std::set<int> frozen_modules;
};

// Captures the pretrained state: every group's snapshot := its current
// values. Idempotent when nothing trained in between.
void snapshot_pretrained(ModelParameters& model);

// Euclidean norm of (values - snapshot) for one group.
double l2_deviation(const ParameterGroup& group);

// Root-sum-of-squares of member-group deviations for one module.
double module_deviation(const ModelParameters& model, int module_index);

// Marks every group whose module_index is in the mask as frozen.
// Throws ConfigError on an index outside 1..module_count.
void apply_freeze_mask(ModelParameters& model, const FreezeMask& mask);

// Checks structural invariants: non-empty groups, unique names, matching
// values/snapshot lengths, module indices forming a contiguous 1..module_count
// range. Throws ContractViolation on failure.
void validate(const ModelParameters& model);

// Binary checkpoint archive. save -> load -> save reproduces identical bytes.
void save_model(const ModelParameters& model, const std::filesystem::path& path);
ModelParameters load_model(const std::filesystem::path& path);

}  // namespace proxtune
