#include "proxtune/proximity.hpp"

#include <cmath>

#include "proxtune/errors.hpp"

namespace proxtune {

const char* to_string(ProximityMode mode) {
    switch (mode) {
        case ProximityMode::None: return "none";
        case ProximityMode::L2SP: return "l2sp";
        case ProximityMode::TPGM: return "tpgm";
        case ProximityMode::SPD: return "spd";
        case ProximityMode::MAPS: return "maps";
    }
    return "?";
}

const char* to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::Linear: return "linear";
        case ScheduleKind::Cosine: return "cosine";
    }
    return "?";
}

ProximityMode proximity_mode_from_string(const std::string& s) {
    if (s == "none") return ProximityMode::None;
    if (s == "l2sp") return ProximityMode::L2SP;
    if (s == "tpgm") return ProximityMode::TPGM;
    if (s == "spd") return ProximityMode::SPD;
    if (s == "maps") return ProximityMode::MAPS;
    throw ConfigError("unknown proximity mode '" + s + "'");
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "constant") return ScheduleKind::Constant;
    if (s == "linear") return ScheduleKind::Linear;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw ConfigError("unknown schedule '" + s + "'");
}

AdamState AdamState::init(const ModelParameters& model, const ProximityPolicy& policy) {
    AdamState state;
    state.alpha = policy.alpha;
    state.beta1 = policy.beta1;
    state.beta2 = policy.beta2;
    state.epsilon = policy.epsilon;
    state.m.reserve(model.groups.size());
    state.v.reserve(model.groups.size());
    for (const auto& g : model.groups) {
        state.m.emplace_back(g.values.size(), 0.0);
        state.v.emplace_back(g.values.size(), 0.0);
    }
    return state;
}

void AdamState::begin_step() {
    ++t;
    beta1_pow *= beta1;
    beta2_pow *= beta2;
}

double StepReport::projection_rate() const {
    if (entries.empty()) return 0.0;
    std::size_t fired = 0;
    for (const auto& e : entries) fired += e.projection_applied ? 1 : 0;
    return static_cast<double>(fired) / static_cast<double>(entries.size());
}

std::vector<double> adam_propose(const ParameterGroup& group,
                                 const std::vector<double>& grad,
                                 AdamState& state, std::size_t group_index,
                                 double weight_decay) {
    if (grad.size() != group.values.size())
        throw ContractViolation("adam_propose: gradient shape mismatch for group " + group.name);
    if (group_index >= state.m.size())
        throw ContractViolation("adam_propose: group index out of range");
    if (state.t < 1)
        throw ContractViolation("adam_propose: begin_step() not called");

    auto& m = state.m[group_index];
    auto& v = state.v[group_index];
    const double bc1 = 1.0 - state.beta1_pow;
    const double bc2 = 1.0 - state.beta2_pow;

    std::vector<double> proposed(group.values.size());
    for (std::size_t i = 0; i < proposed.size(); ++i) {
        const double g = grad[i];
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        double x = group.values[i] - state.alpha * m_hat / (std::sqrt(v_hat) + state.epsilon);
        if (weight_decay != 0.0) x -= state.alpha * weight_decay * group.values[i];
        proposed[i] = x;
    }
    return proposed;
}

std::vector<double> l2sp_gradient(const ParameterGroup& group, double lambda_reg) {
    if (group.snapshot.size() != group.values.size())
        throw ContractViolation("l2sp_gradient: snapshot not taken for group " + group.name);
    std::vector<double> out(group.values.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lambda_reg * (group.values[i] - group.snapshot[i]);
    return out;
}

namespace {

double displacement_norm(const std::vector<double>& point, const std::vector<double>& origin) {
    double ss = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double d = point[i] - origin[i];
        ss += d * d;
    }
    return std::sqrt(ss);
}

}  // namespace

std::vector<double> project_l2_ball(const std::vector<double>& proposed,
                                    const std::vector<double>& snapshot,
                                    double gamma) {
    if (proposed.size() != snapshot.size())
        throw ContractViolation("project_l2_ball: length mismatch");
    if (!(gamma > 0.0))
        throw ContractViolation("project_l2_ball: gamma must be positive");
    const double radius = displacement_norm(proposed, snapshot);
    if (radius <= gamma) return proposed;
    const double scale = gamma / radius;
    std::vector<double> out(proposed.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = snapshot[i] + scale * (proposed[i] - snapshot[i]);
    return out;
}

double spd_condition(const std::vector<double>& grad,
                     const std::vector<double>& current,
                     const std::vector<double>& snapshot) {
    if (grad.size() != current.size() || current.size() != snapshot.size())
        throw ContractViolation("spd_condition: length mismatch");
    double dot = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i)
        dot += grad[i] * (current[i] - snapshot[i]);
    return -dot;
}

double deviation_ratio(double gamma_t, double gamma_prev) {
    if (gamma_t < 0.0 || gamma_prev < 0.0)
        throw ContractViolation("deviation_ratio: radii must be non-negative");
    if (gamma_t == 0.0 || gamma_t <= gamma_prev) return 0.0;
    return (gamma_t - gamma_prev) / gamma_t;
}

double assign_lambda(int module_index, int module_count,
                     const ProximityPolicy& policy, const ParameterGroup& group) {
    if (module_index < 1 || module_index > module_count)
        throw ContractViolation("assign_lambda: module index " + std::to_string(module_index) +
                                " outside 1.." + std::to_string(module_count));
    if (group.from_scratch) return 0.0;
    switch (policy.mode) {
        case ProximityMode::None:
        case ProximityMode::L2SP:
        case ProximityMode::TPGM:
            return 0.0;
        case ProximityMode::SPD:
            return policy.lambda;
        case ProximityMode::MAPS:
            break;
    }
    if (module_count == 1) return policy.lambda_max;
    const double frac = static_cast<double>(module_index - 1) / static_cast<double>(module_count - 1);
    switch (policy.schedule) {
        case ScheduleKind::Constant: return policy.lambda_max;
        case ScheduleKind::Linear: return policy.lambda_max * (1.0 - frac);
        case ScheduleKind::Cosine: return policy.lambda_max * (1.0 + std::cos(M_PI * frac)) / 2.0;
    }
    return 0.0;
}

StepEntry proximal_step(ParameterGroup& group, const std::vector<double>& grad,
                        std::vector<double> proposed, double lambda_k,
                        const ProximityPolicy& policy) {
    if (group.frozen)
        throw ContractViolation("proximal_step: group " + group.name + " is frozen");
    if (proposed.size() != group.values.size())
        throw ContractViolation("proximal_step: proposal shape mismatch");

    StepEntry entry;
    entry.module_index = group.module_index;
    entry.lambda_k = lambda_k;
    entry.gamma_prev = l2_deviation(group);
    entry.gamma_proposed = displacement_norm(proposed, group.snapshot);

    switch (policy.mode) {
        case ProximityMode::None:
        case ProximityMode::L2SP:
            entry.c_t = spd_condition(grad, group.values, group.snapshot);
            group.values = std::move(proposed);
            break;
        case ProximityMode::TPGM:
            entry.c_t = spd_condition(grad, group.values, group.snapshot);
            entry.projection_applied = entry.gamma_proposed > policy.gamma;
            group.values = project_l2_ball(proposed, group.snapshot, policy.gamma);
            break;
        case ProximityMode::SPD:
        case ProximityMode::MAPS: {
            entry.c_t = spd_condition(grad, group.values, group.snapshot);
            if (entry.c_t < 0.0) {
                const double r_t = deviation_ratio(entry.gamma_proposed, entry.gamma_prev);
                const double shrink = lambda_k * r_t;
                // shrink == 0 keeps the proposal bit-identical to plain Adam.
                if (shrink != 0.0) {
                    for (std::size_t i = 0; i < proposed.size(); ++i)
                        proposed[i] -= shrink * (proposed[i] - group.snapshot[i]);
                }
                entry.projection_applied = lambda_k > 0.0;
            }
            group.values = std::move(proposed);
            break;
        }
    }
    return entry;
}

StepReport optimizer_step(ModelParameters& model,
                          const std::vector<std::vector<double>>& grads,
                          AdamState& state, const ProximityPolicy& policy) {
    if (grads.size() != model.groups.size())
        throw ContractViolation("optimizer_step: gradient list does not match group count");
    if (state.m.size() != model.groups.size())
        throw ContractViolation("optimizer_step: Adam state does not match group count");

    state.begin_step();
    StepReport report;
    report.step = state.t;

    // Projection replaces weight decay under SPD/MAPS.
    const bool projective = policy.mode == ProximityMode::SPD || policy.mode == ProximityMode::MAPS;
    const double weight_decay = projective ? 0.0 : policy.weight_decay;

    for (std::size_t i = 0; i < model.groups.size(); ++i) {
        auto& group = model.groups[i];
        if (group.frozen) continue;
        if (grads[i].size() != group.values.size())
            throw ContractViolation("optimizer_step: missing gradient for group " + group.name);

        const std::vector<double>* grad = &grads[i];
        std::vector<double> combined;
        if (policy.mode == ProximityMode::L2SP && policy.lambda_reg != 0.0) {
            combined = l2sp_gradient(group, policy.lambda_reg);
            for (std::size_t j = 0; j < combined.size(); ++j) combined[j] += grads[i][j];
            grad = &combined;
        }

        auto proposed = adam_propose(group, *grad, state, i, weight_decay);
        const double lambda_k = assign_lambda(group.module_index, model.module_count, policy, group);
        StepEntry entry = proximal_step(group, *grad, std::move(proposed), lambda_k, policy);
        entry.group_index = i;
        report.entries.push_back(entry);
    }
    ++model.version;
    return report;
}

}  // namespace proxtune
