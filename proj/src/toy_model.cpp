#include "proxtune/toy_model.hpp"

#include <cmath>

#include "proxtune/errors.hpp"
#include "proxtune/rng.hpp"

namespace proxtune {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

ModelSpec default_model_spec(std::uint64_t init_seed, int input_dim, int output_dim) {
    ModelSpec spec;
    spec.input_dim = input_dim;
    spec.output_dim = output_dim;
    spec.init_seed = init_seed;
    spec.activation = Activation::Tanh;
    // Widths ascend with depth, mirroring the vision-encoder < language-model
    // size ordering of the stacks this stands in for. The bridge stays the
    // narrow point of the trunk.
    spec.module_layout = {
        {"vision_early", {6}, false},
        {"vision_late", {40}, false},
        {"bridge", {16}, false},
        {"lang_early", {64}, false},
        {"lang_late", {72}, false},
        {"head", {output_dim}, true},
    };
    return spec;
}

namespace {

struct LayerDims {
    int module_index;  // 1-based
    int in = 0;
    int out = 0;
};

std::vector<LayerDims> layer_dims(const ModelSpec& spec) {
    if (spec.input_dim <= 0 || spec.output_dim <= 0)
        throw ConfigError("model dims must be positive");
    if (spec.module_layout.size() < 2)
        throw ConfigError("model needs at least 2 modules");
    for (std::size_t m = 0; m < spec.module_layout.size(); ++m) {
        const auto& mod = spec.module_layout[m];
        if (mod.widths.empty())
            throw ConfigError("module '" + mod.name + "' has no layers");
        if (mod.from_scratch && m + 1 != spec.module_layout.size())
            throw ConfigError("only the last module may be from_scratch ('" + mod.name + "')");
    }
    std::vector<LayerDims> layers;
    int width = spec.input_dim;
    for (std::size_t m = 0; m < spec.module_layout.size(); ++m) {
        for (int w : spec.module_layout[m].widths) {
            if (w <= 0)
                throw ConfigError("non-positive layer width in module '" +
                                  spec.module_layout[m].name + "'");
            layers.push_back({static_cast<int>(m) + 1, width, w});
            width = w;
        }
    }
    if (width != spec.output_dim)
        throw ConfigError("module widths end at " + std::to_string(width) +
                          ", expected output_dim " + std::to_string(spec.output_dim));
    return layers;
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::Tanh: return std::tanh(z);
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Identity: return z;
    }
    return z;
}

// Derivative expressed through the activation value.
double activate_grad(Activation a, double value) {
    switch (a) {
        case Activation::Tanh: return 1.0 - value * value;
        case Activation::Relu: return value > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

}  // namespace

ModelParameters build_model(const ModelSpec& spec) {
    const auto layers = layer_dims(spec);
    ModelParameters model;
    model.module_count = static_cast<int>(spec.module_layout.size());
    SplitMix64 rng(spec.init_seed);

    int layer_in_module = 0;
    int prev_module = 0;
    for (const auto& layer : layers) {
        layer_in_module = layer.module_index == prev_module ? layer_in_module + 1 : 0;
        prev_module = layer.module_index;
        const auto& mod = spec.module_layout[static_cast<std::size_t>(layer.module_index) - 1];
        const std::string base = mod.name + ".l" + std::to_string(layer_in_module);

        ParameterGroup weight;
        weight.name = base + ".w";
        weight.module_index = layer.module_index;
        weight.from_scratch = mod.from_scratch;
        weight.values.resize(static_cast<std::size_t>(layer.out) * layer.in);
        const double bound = std::sqrt(6.0 / (layer.in + layer.out));
        for (auto& w : weight.values) w = rng.next_uniform(-bound, bound);
        weight.snapshot = weight.values;

        ParameterGroup bias;
        bias.name = base + ".b";
        bias.module_index = layer.module_index;
        bias.from_scratch = mod.from_scratch;
        bias.values.assign(static_cast<std::size_t>(layer.out), 0.0);
        bias.snapshot = bias.values;

        model.groups.push_back(std::move(weight));
        model.groups.push_back(std::move(bias));
    }
    validate(model);
    return model;
}

std::vector<double> forward(const ModelSpec& spec, const ModelParameters& model,
                            const std::vector<double>& inputs, std::size_t n,
                            ForwardCache* cache) {
    const auto layers = layer_dims(spec);
    if (inputs.size() != n * static_cast<std::size_t>(spec.input_dim))
        throw ContractViolation("forward: input size does not match n x input_dim");
    if (model.groups.size() != layers.size() * 2)
        throw ContractViolation("forward: model does not match spec");

    if (cache) {
        cache->model_version = model.version;
        cache->batch = n;
        cache->act.clear();
        cache->act.reserve(layers.size() + 1);
        cache->act.push_back(inputs);
    }

    std::vector<double> current = inputs;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& dims = layers[l];
        const auto& weight = model.groups[2 * l].values;
        const auto& bias = model.groups[2 * l + 1].values;
        if (weight.size() != static_cast<std::size_t>(dims.out) * dims.in ||
            bias.size() != static_cast<std::size_t>(dims.out))
            throw ContractViolation("forward: group shape does not match spec");

        const bool last = l + 1 == layers.size();
        std::vector<double> next(n * static_cast<std::size_t>(dims.out));
        for (std::size_t row = 0; row < n; ++row) {
            const double* x = current.data() + row * dims.in;
            double* y = next.data() + row * dims.out;
            for (int o = 0; o < dims.out; ++o) {
                const double* w = weight.data() + static_cast<std::size_t>(o) * dims.in;
                double z = bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < dims.in; ++i) z += w[i] * x[i];
                y[o] = last ? z : activate(spec.activation, z);
            }
        }
        current = std::move(next);
        if (cache) cache->act.push_back(current);
    }
    return current;
}

std::vector<std::vector<double>> backward(const ModelSpec& spec,
                                          const ModelParameters& model,
                                          const ForwardCache& cache,
                                          const std::vector<double>& loss_grad) {
    const auto layers = layer_dims(spec);
    if (cache.model_version != model.version)
        throw ContractViolation("backward: stale forward cache (parameter version mismatch)");
    if (cache.act.size() != layers.size() + 1)
        throw ContractViolation("backward: cache does not match spec");
    const std::size_t n = cache.batch;
    if (loss_grad.size() != n * static_cast<std::size_t>(spec.output_dim))
        throw ContractViolation("backward: loss gradient size mismatch");

    std::vector<std::vector<double>> grads(model.groups.size());
    // d(loss)/d(pre-activation) of the current layer; the final layer is
    // linear so it starts as the loss gradient itself.
    std::vector<double> delta = loss_grad;

    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& dims = layers[l];
        const auto& weight = model.groups[2 * l].values;
        const auto& below = cache.act[l];  // n x dims.in

        auto& w_grad = grads[2 * l];
        auto& b_grad = grads[2 * l + 1];
        w_grad.assign(static_cast<std::size_t>(dims.out) * dims.in, 0.0);
        b_grad.assign(static_cast<std::size_t>(dims.out), 0.0);

        for (std::size_t row = 0; row < n; ++row) {
            const double* d = delta.data() + row * dims.out;
            const double* x = below.data() + row * dims.in;
            for (int o = 0; o < dims.out; ++o) {
                double* wg = w_grad.data() + static_cast<std::size_t>(o) * dims.in;
                for (int i = 0; i < dims.in; ++i) wg[i] += d[o] * x[i];
                b_grad[static_cast<std::size_t>(o)] += d[o];
            }
        }

        if (l == 0) break;
        std::vector<double> prev_delta(n * static_cast<std::size_t>(dims.in), 0.0);
        for (std::size_t row = 0; row < n; ++row) {
            const double* d = delta.data() + row * dims.out;
            double* pd = prev_delta.data() + row * dims.in;
            for (int o = 0; o < dims.out; ++o) {
                const double* w = weight.data() + static_cast<std::size_t>(o) * dims.in;
                for (int i = 0; i < dims.in; ++i) pd[i] += d[o] * w[i];
            }
            // Chain through the activation of the layer below.
            const double* a = cache.act[l].data() + row * dims.in;
            for (int i = 0; i < dims.in; ++i)
                pd[i] *= activate_grad(spec.activation, a[i]);
        }
        delta = std::move(prev_delta);
    }
    return grads;
}

std::pair<double, std::vector<double>> loss_mse(const std::vector<double>& outputs,
                                                const std::vector<double>& targets,
                                                std::size_t n, int dim) {
    const std::size_t total = n * static_cast<std::size_t>(dim);
    if (outputs.size() != total || targets.size() != total)
        throw ContractViolation("loss_mse: shape mismatch");
    const double scale = 1.0 / static_cast<double>(total);
    double loss = 0.0;
    std::vector<double> grad(total);
    for (std::size_t i = 0; i < total; ++i) {
        const double r = outputs[i] - targets[i];
        loss += r * r * scale;
        grad[i] = 2.0 * r * scale;
    }
    return {loss, std::move(grad)};
}

}  // namespace proxtune
