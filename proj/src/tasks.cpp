#include "proxtune/tasks.hpp"

#include <cmath>
#include <fstream>

#include "proxtune/errors.hpp"
#include "proxtune/rng.hpp"

namespace proxtune {

namespace {

constexpr int kTeacherWidth = 64;

// Shift for coordinate i under the broadcast rule.
double shift_at(const TaskSpec& spec, int i) {
    if (spec.input_mean_shift.empty()) return 0.0;
    if (spec.input_mean_shift.size() == 1) return spec.input_mean_shift[0];
    return spec.input_mean_shift[static_cast<std::size_t>(i)];
}

struct Teacher {
    std::vector<double> w1, b1, w2, b2;
    int in, out;
};

// Fixed 2-layer tanh network: in -> 64 (tanh) -> out (linear).
Teacher make_teacher(const TaskSpec& spec) {
    Teacher t;
    t.in = spec.input_dim;
    t.out = spec.output_dim;
    SplitMix64 rng(spec.teacher_seed);
    const double bound1 = std::sqrt(6.0 / (t.in + kTeacherWidth));
    t.w1.resize(static_cast<std::size_t>(kTeacherWidth) * t.in);
    for (auto& w : t.w1) w = rng.next_uniform(-bound1, bound1);
    t.b1.assign(kTeacherWidth, 0.0);
    const double bound2 = std::sqrt(6.0 / (kTeacherWidth + t.out));
    t.w2.resize(static_cast<std::size_t>(t.out) * kTeacherWidth);
    for (auto& w : t.w2) w = rng.next_uniform(-bound2, bound2);
    t.b2.assign(static_cast<std::size_t>(t.out), 0.0);
    return t;
}

void teacher_eval(const Teacher& t, const double* x, double* y) {
    double hidden[kTeacherWidth];
    for (int h = 0; h < kTeacherWidth; ++h) {
        const double* w = t.w1.data() + static_cast<std::size_t>(h) * t.in;
        double z = t.b1[static_cast<std::size_t>(h)];
        for (int i = 0; i < t.in; ++i) z += w[i] * x[i];
        hidden[h] = std::tanh(z);
    }
    for (int o = 0; o < t.out; ++o) {
        const double* w = t.w2.data() + static_cast<std::size_t>(o) * kTeacherWidth;
        double z = t.b2[static_cast<std::size_t>(o)];
        for (int h = 0; h < kTeacherWidth; ++h) z += w[h] * hidden[h];
        y[o] = z;
    }
}

}  // namespace

std::vector<double> teacher_forward(const TaskSpec& spec,
                                    const std::vector<double>& inputs,
                                    std::size_t n) {
    if (inputs.size() != n * static_cast<std::size_t>(spec.input_dim))
        throw ContractViolation("teacher_forward: input size mismatch");
    const Teacher teacher = make_teacher(spec);
    std::vector<double> out(n * static_cast<std::size_t>(spec.output_dim));
    for (std::size_t row = 0; row < n; ++row)
        teacher_eval(teacher, inputs.data() + row * spec.input_dim,
                     out.data() + row * spec.output_dim);
    return out;
}

Dataset generate(const TaskSpec& spec, std::uint64_t seed, std::size_t n) {
    if (n == 0) throw ContractViolation("generate: n must be positive");
    if (spec.input_mean_shift.size() > 1 &&
        spec.input_mean_shift.size() != static_cast<std::size_t>(spec.input_dim))
        throw ConfigError("input_mean_shift length must be 1 or input_dim");

    Dataset data;
    data.n = n;
    data.input_dim = spec.input_dim;
    data.output_dim = spec.output_dim;
    data.seed = seed;

    SplitMix64 rng(seed);
    data.inputs.resize(n * static_cast<std::size_t>(spec.input_dim));
    for (std::size_t row = 0; row < n; ++row)
        for (int i = 0; i < spec.input_dim; ++i)
            data.inputs[row * spec.input_dim + i] = rng.next_normal() + shift_at(spec, i);

    data.targets = teacher_forward(spec, data.inputs, n);
    const auto& tf = spec.target_transform;
    for (auto& y : data.targets) y = tf.a * y + tf.b;
    if (spec.noise_std > 0.0)
        for (auto& y : data.targets) y += spec.noise_std * rng.next_normal();
    return data;
}

TaskTriple make_task_triple(std::uint64_t base_seed, int input_dim, int output_dim,
                            double noise_std) {
    TaskSpec base;
    base.input_dim = input_dim;
    base.output_dim = output_dim;
    base.teacher_seed = derive_stream(base_seed, 0x7e4cbee5);
    base.noise_std = noise_std;

    TaskTriple triple;
    triple.pretrain = base;

    triple.finetune = base;
    triple.finetune.input_mean_shift = {1.5};
    triple.finetune.target_transform = {1.2, 0.3};

    triple.retention_probe = triple.pretrain;

    triple.shift_probe = base;
    triple.shift_probe.input_mean_shift = {-1.0};
    return triple;
}

void export_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (int i = 0; i < data.input_dim; ++i) out << (i ? "," : "") << "x" << i;
    for (int o = 0; o < data.output_dim; ++o) out << ",y" << o;
    out << "\n";
    out.precision(17);
    for (std::size_t row = 0; row < data.n; ++row) {
        for (int i = 0; i < data.input_dim; ++i)
            out << (i ? "," : "") << data.inputs[row * data.input_dim + i];
        for (int o = 0; o < data.output_dim; ++o)
            out << "," << data.targets[row * data.output_dim + o];
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace proxtune
