#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proxtune/param_store.hpp"

namespace proxtune {

enum class Activation { Tanh, Relu, Identity };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One module of the stack: a run of dense layers given by their output
// widths. Only the last module of a spec may be from_scratch (the head
// analogue with no pretrained state).
struct ModuleLayout {
    std::string name;
    std::vector<int> widths;
    bool from_scratch = false;
};

struct ModelSpec {
    int input_dim = 4;
    int output_dim = 4;
    std::vector<ModuleLayout> module_layout;
    Activation activation = Activation::Tanh;
    std::uint64_t init_seed = 0;
};

// Desk-scale default: vision_early (6) -> vision_late (40) -> bridge (16) ->
// lang_early (64) -> lang_late (72) -> head (scratch), parameter counts
// ascending with depth like the stacks this stands in for.
ModelSpec default_model_spec(std::uint64_t init_seed = 0, int input_dim = 4,
                             int output_dim = 4);

// Activations of one forward pass, kept for the backward pass. Valid only
// for the parameter version it was produced with.
struct ForwardCache {
    std::uint64_t model_version = 0;
    std::size_t batch = 0;
    // act[0] is the input batch; act[l+1] the output of layer l. Hidden
    // layers store post-activation values; the final layer is linear.
    std::vector<std::vector<double>> act;
};

// Creates one weight and one bias ParameterGroup per layer, in stack order,
// with deterministic scaled-uniform init from spec.init_seed.
// Throws ConfigError on an inconsistent spec.
ModelParameters build_model(const ModelSpec& spec);

// Dense feed-forward over a row-major batch (n x input_dim). Returns the
// row-major outputs (n x output_dim); fills `cache` when non-null.
std::vector<double> forward(const ModelSpec& spec, const ModelParameters& model,
                            const std::vector<double>& inputs, std::size_t n,
                            ForwardCache* cache = nullptr);

// Reverse-mode gradients for every group (frozen ones included; the
// optimizer skips them). `loss_grad` is d(loss)/d(outputs), n x output_dim.
// Throws ContractViolation when the cache is stale.
std::vector<std::vector<double>> backward(const ModelSpec& spec,
                                          const ModelParameters& model,
                                          const ForwardCache& cache,
                                          const std::vector<double>& loss_grad);

// Mean squared error over all batch entries and output coordinates, plus
// its gradient (2 / (n*d)) * (outputs - targets).
std::pair<double, std::vector<double>> loss_mse(const std::vector<double>& outputs,
                                                const std::vector<double>& targets,
                                                std::size_t n, int dim);

}  // namespace proxtune
