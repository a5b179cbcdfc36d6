#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "proxtune/param_store.hpp"

namespace proxtune {

// Which proximity regime constrains the update.
//   None: plain Adam.
//   L2SP: quadratic penalty (lambda_reg/2)*||theta - theta0||^2 added to the loss.
//   TPGM: hard l2-ball projection onto radius gamma after every step.
//   SPD:  conditional projection with one global strength lambda.
//   MAPS: conditional projection with module-scheduled strength lambda_k.
enum class ProximityMode { None, L2SP, TPGM, SPD, MAPS };

enum class ScheduleKind { Constant, Linear, Cosine };

struct ProximityPolicy {
    ProximityMode mode = ProximityMode::None;
    double lambda_reg = 0.0;  // L2SP penalty strength
    double gamma = 1.0;       // TPGM ball radius, > 0
    double lambda = 0.0;      // SPD global projection strength
    double lambda_max = 0.0;  // MAPS schedule peak
    ScheduleKind schedule = ScheduleKind::Linear;

    // Adam hyperparameters; one config section describes the whole optimizer.
    double alpha = 4e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Decoupled weight decay, usable with None/L2SP/TPGM. Forced off under
    // SPD/MAPS where the projection replaces it.
    double weight_decay = 0.0;
};

const char* to_string(ProximityMode mode);
const char* to_string(ScheduleKind kind);
ProximityMode proximity_mode_from_string(const std::string& s);
ScheduleKind schedule_kind_from_string(const std::string& s);

// Bias-corrected Adam state. Moments are per group, the step counter is
// global: it advances exactly once per optimizer_step.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long t = 0;
    double alpha = 4e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // Running beta^t products for the bias correction.
    double beta1_pow = 1.0;
    double beta2_pow = 1.0;

    static AdamState init(const ModelParameters& model, const ProximityPolicy& policy);

    // Advances t and the correction products. Must run once before the
    // per-group proposals of a step.
    void begin_step();
};

// Per-group diagnostics of one optimizer step.
struct StepEntry {
    std::size_t group_index = 0;
    int module_index = 0;
    double gamma_prev = 0.0;      // deviation radius before the step
    double gamma_proposed = 0.0;  // radius of the unconstrained proposal
    double c_t = 0.0;             // gradient-displacement selection value
    double lambda_k = 0.0;
    bool projection_applied = false;
};

struct StepReport {
    long step = 0;
    std::vector<StepEntry> entries;  // non-frozen groups, declaration order

    // Fraction of participating groups whose projection fired this step.
    double projection_rate() const;
};

// Unconstrained bias-corrected Adam proposal for one group. Updates the
// group's moments in `state` but does not write group values; the proximity
// decision happens next. Requires begin_step() to have run for this step.
std::vector<double> adam_propose(const ParameterGroup& group,
                                 const std::vector<double>& grad,
                                 AdamState& state, std::size_t group_index,
                                 double weight_decay = 0.0);

// Gradient of the L2-SP penalty term: lambda_reg * (values - snapshot).
std::vector<double> l2sp_gradient(const ParameterGroup& group, double lambda_reg);

// Projects `proposed` onto the l2 ball of radius gamma around `snapshot`.
// Inside the ball the input is returned unchanged.
std::vector<double> project_l2_ball(const std::vector<double>& proposed,
                                    const std::vector<double>& snapshot,
                                    double gamma);

// Selection value c_t = -grad . (current - snapshot). Negative means the
// step fights proximity and a projection should fire.
double spd_condition(const std::vector<double>& grad,
                     const std::vector<double>& current,
                     const std::vector<double>& snapshot);

// r_t = max(0, gamma_t - gamma_prev) / gamma_t, with r_t = 0 when the
// proposal coincides with the snapshot (gamma_t == 0).
double deviation_ratio(double gamma_t, double gamma_prev);

// Projection strength for a module. From-scratch groups always get 0; SPD
// returns the global lambda; MAPS evaluates the schedule, which decays from
// lambda_max at module 1 to 0 at the last module (Linear/Cosine).
double assign_lambda(int module_index, int module_count,
                     const ProximityPolicy& policy, const ParameterGroup& group);

// Applies the mode's constraint to an Adam proposal and writes the group's
// new values. `grad` is the gradient used for the proposal (consumed by the
// selection condition).
StepEntry proximal_step(ParameterGroup& group, const std::vector<double>& grad,
                        std::vector<double> proposed, double lambda_k,
                        const ProximityPolicy& policy);

// One full optimizer step over the model: advances t once, then per
// non-frozen group in declaration order runs propose / assign / constrain.
// `grads` is aligned with model.groups; entries for frozen groups are
// ignored (and may be empty).
StepReport optimizer_step(ModelParameters& model,
                          const std::vector<std::vector<double>>& grads,
                          AdamState& state, const ProximityPolicy& policy);

}  // namespace proxtune
