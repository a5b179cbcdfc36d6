#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace proxtune {

// Affine map applied to teacher outputs: y -> a*y + b. (1, 0) is identity.
struct TargetTransform {
    double a = 1.0;
    double b = 0.0;
};

// A synthetic regression task: inputs are standard normal shifted by
// input_mean_shift, targets come from a fixed random teacher network plus
// Gaussian noise. Pretrain / fine-tune / probe tasks are declared transforms
// of the same teacher.
struct TaskSpec {
    int input_dim = 16;
    int output_dim = 4;
    std::uint64_t teacher_seed = 0;
    // Empty: no shift. Size 1: scalar broadcast. Size input_dim: per coord.
    std::vector<double> input_mean_shift;
    TargetTransform target_transform;
    double noise_std = 0.0;
};

struct Dataset {
    std::vector<double> inputs;   // n x input_dim, row-major
    std::vector<double> targets;  // n x output_dim, row-major
    std::size_t n = 0;
    int input_dim = 0;
    int output_dim = 0;
    std::uint64_t seed = 0;
};

// The pretrain -> finetune -> evaluation protocol, desk scale. The retention
// probe is the pretrain distribution itself; the shift probe is a held-out
// input shift never trained on.
struct TaskTriple {
    TaskSpec pretrain;         // unshifted teacher
    TaskSpec finetune;         // input shift +1.5, targets 1.2*y + 0.3
    TaskSpec retention_probe;  // == pretrain
    TaskSpec shift_probe;      // input shift -1.0
};

// Deterministic in (spec, seed, n).
Dataset generate(const TaskSpec& spec, std::uint64_t seed, std::size_t n);

TaskTriple make_task_triple(std::uint64_t base_seed, int input_dim = 16,
                            int output_dim = 4, double noise_std = 0.01);

// Teacher evaluation without noise or target transform; exposed for tests.
std::vector<double> teacher_forward(const TaskSpec& spec,
                                    const std::vector<double>& inputs,
                                    std::size_t n);

// Delimited text export: header row, one sample per line.
void export_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace proxtune
