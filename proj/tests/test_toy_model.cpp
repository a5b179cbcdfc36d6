#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "proxtune/errors.hpp"
#include "proxtune/proximity.hpp"
#include "proxtune/rng.hpp"
#include "proxtune/toy_model.hpp"

using namespace proxtune;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_batch(SplitMix64& rng, std::size_t n, int dim) {
    std::vector<double> x(n * static_cast<std::size_t>(dim));
    for (auto& v : x) v = rng.next_normal();
    return x;
}

// Spec with two single-layer modules; the minimal legal stack.
ModelSpec two_layer_spec(int dim, Activation act, std::uint64_t seed = 0) {
    ModelSpec spec;
    spec.input_dim = dim;
    spec.output_dim = dim;
    spec.activation = act;
    spec.init_seed = seed;
    spec.module_layout = {{"first", {dim}, false}, {"second", {dim}, false}};
    return spec;
}

double full_loss(const ModelSpec& spec, const ModelParameters& model,
                 const std::vector<double>& x, const std::vector<double>& y, std::size_t n) {
    const auto out = forward(spec, model, x, n);
    return loss_mse(out, y, n, spec.output_dim).first;
}

}  // namespace

TEST_CASE("build_model structure for the default spec") {
    const ModelSpec spec = default_model_spec(7);
    const ModelParameters model = build_model(spec);
    CHECK(model.module_count == 6);
    // 6 layers, one weight + one bias group each, ordered by module.
    REQUIRE(model.groups.size() == 12);
    CHECK(model.groups[0].name == "vision_early.l0.w");
    CHECK(model.groups[1].name == "vision_early.l0.b");
    CHECK(model.groups[10].name == "head.l0.w");
    CHECK(model.groups[11].name == "head.l0.b");

    int prev = 1;
    for (const auto& g : model.groups) {
        CHECK(g.module_index >= prev);
        prev = g.module_index;
        CHECK(g.snapshot.size() == g.values.size());
        // Head is the only from-scratch module.
        CHECK(g.from_scratch == (g.module_index == 6));
    }
    // First layer: 6 x input_dim weights.
    CHECK(model.groups[0].values.size() == 6u * 4u);
    // Head layer: output_dim x 72 weights.
    CHECK(model.groups[10].values.size() == 4u * 72u);
}

TEST_CASE("build_model determinism and seed sensitivity") {
    const ModelSpec spec = default_model_spec(3);
    const ModelParameters a = build_model(spec);
    const ModelParameters b = build_model(spec);
    for (std::size_t i = 0; i < a.groups.size(); ++i)
        CHECK(bitwise_equal(a.groups[i].values, b.groups[i].values));

    const ModelParameters c = build_model(default_model_spec(4));
    bool any_diff = false;
    for (std::size_t i = 0; i < a.groups.size(); ++i)
        any_diff = any_diff || !bitwise_equal(a.groups[i].values, c.groups[i].values);
    CHECK(any_diff);
}

TEST_CASE("build_model rejects inconsistent specs") {
    ModelSpec spec = default_model_spec(0);
    spec.module_layout.back().widths = {7};  // head no longer ends at output_dim
    CHECK_THROWS_AS(build_model(spec), ConfigError);

    spec = default_model_spec(0);
    spec.module_layout[0].from_scratch = true;  // only the last may be from scratch
    CHECK_THROWS_AS(build_model(spec), ConfigError);

    spec = default_model_spec(0);
    spec.module_layout.resize(1);
    CHECK_THROWS_AS(build_model(spec), ConfigError);

    spec = default_model_spec(0);
    spec.module_layout[2].widths.clear();
    CHECK_THROWS_AS(build_model(spec), ConfigError);
}

TEST_CASE("forward: zero weights produce zero outputs") {
    for (auto act : {Activation::Tanh, Activation::Relu, Activation::Identity}) {
        ModelSpec spec = default_model_spec(1);
        spec.activation = act;
        ModelParameters model = build_model(spec);
        for (auto& g : model.groups) g.values.assign(g.values.size(), 0.0);
        SplitMix64 rng(2);
        const auto x = random_batch(rng, 5, spec.input_dim);
        const auto out = forward(spec, model, x, 5);
        for (double v : out) CHECK(v == 0.0);
    }
}

TEST_CASE("forward: identity chain reproduces inputs") {
    const int dim = 3;
    const ModelSpec spec = two_layer_spec(dim, Activation::Identity);
    ModelParameters model = build_model(spec);
    // Both layers: identity weight matrix, zero bias.
    for (std::size_t l = 0; l < 2; ++l) {
        auto& w = model.groups[2 * l].values;
        w.assign(w.size(), 0.0);
        for (int i = 0; i < dim; ++i) w[static_cast<std::size_t>(i) * dim + i] = 1.0;
        auto& b = model.groups[2 * l + 1].values;
        b.assign(b.size(), 0.0);
    }
    SplitMix64 rng(3);
    const auto x = random_batch(rng, 4, dim);
    const auto out = forward(spec, model, x, 4);
    CHECK(bitwise_equal(out, x));
}

TEST_CASE("forward matches a scalar triple-loop oracle") {
    const ModelSpec spec = default_model_spec(11);
    const ModelParameters model = build_model(spec);
    SplitMix64 rng(12);
    const std::size_t n = 7;
    const auto x = random_batch(rng, n, spec.input_dim);
    const auto out = forward(spec, model, x, n);

    // Oracle: per-sample, per-layer scalar evaluation.
    const std::vector<std::pair<int, int>> dims = {
        {4, 6}, {6, 40}, {40, 16}, {16, 64}, {64, 72}, {72, 4}};
    for (std::size_t row = 0; row < n; ++row) {
        std::vector<double> cur(x.begin() + row * spec.input_dim,
                                x.begin() + (row + 1) * spec.input_dim);
        for (std::size_t l = 0; l < dims.size(); ++l) {
            const auto& w = model.groups[2 * l].values;
            const auto& b = model.groups[2 * l + 1].values;
            std::vector<double> next(static_cast<std::size_t>(dims[l].second));
            for (int o = 0; o < dims[l].second; ++o) {
                double z = b[static_cast<std::size_t>(o)];
                for (int i = 0; i < dims[l].first; ++i)
                    z += w[static_cast<std::size_t>(o) * dims[l].first + i] * cur[static_cast<std::size_t>(i)];
                next[static_cast<std::size_t>(o)] = l + 1 == dims.size() ? z : std::tanh(z);
            }
            cur = std::move(next);
        }
        for (int o = 0; o < spec.output_dim; ++o) {
            const double got = out[row * spec.output_dim + o];
            CHECK(std::abs(got - cur[static_cast<std::size_t>(o)]) <=
                  1e-12 * std::max(1.0, std::abs(cur[static_cast<std::size_t>(o)])));
        }
    }
}

TEST_CASE("forward rejects shape mismatches") {
    const ModelSpec spec = default_model_spec(0);
    const ModelParameters model = build_model(spec);
    const std::vector<double> bad(10, 0.0);
    CHECK_THROWS_AS(forward(spec, model, bad, 3), ContractViolation);
}

TEST_CASE("backward: zero loss gradient gives zero parameter gradients") {
    const ModelSpec spec = default_model_spec(21);
    const ModelParameters model = build_model(spec);
    SplitMix64 rng(22);
    const std::size_t n = 4;
    const auto x = random_batch(rng, n, spec.input_dim);
    ForwardCache cache;
    forward(spec, model, x, n, &cache);
    const std::vector<double> zero(n * static_cast<std::size_t>(spec.output_dim), 0.0);
    const auto grads = backward(spec, model, cache, zero);
    for (const auto& g : grads)
        for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("backward: linear network matches the hand-derived least-squares gradient") {
    const int dim = 3;
    const ModelSpec spec = two_layer_spec(dim, Activation::Identity, 5);
    const ModelParameters model = build_model(spec);
    SplitMix64 rng(6);
    const std::size_t n = 8;
    const auto x = random_batch(rng, n, dim);
    const auto y = random_batch(rng, n, dim);

    ForwardCache cache;
    const auto out = forward(spec, model, x, n, &cache);
    const auto [loss, loss_grad] = loss_mse(out, y, n, dim);
    const auto grads = backward(spec, model, cache, loss_grad);

    // For out = W2(W1 x + b1) + b2 and MSE loss with residual gradient G:
    //   dW2 = G^T h,  db2 = col-sum G,  dW1 = (G W2)^T x,  db1 = col-sum(G W2).
    const auto& w2 = model.groups[2].values;
    std::vector<double> dW2(static_cast<std::size_t>(dim) * dim, 0.0);
    std::vector<double> db2(static_cast<std::size_t>(dim), 0.0);
    std::vector<double> dW1(static_cast<std::size_t>(dim) * dim, 0.0);
    std::vector<double> db1(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        const double* gr = loss_grad.data() + row * dim;
        const double* h = cache.act[1].data() + row * dim;
        const double* xi = x.data() + row * dim;
        for (int o = 0; o < dim; ++o) {
            for (int i = 0; i < dim; ++i) dW2[static_cast<std::size_t>(o) * dim + i] += gr[o] * h[i];
            db2[static_cast<std::size_t>(o)] += gr[o];
        }
        for (int i = 0; i < dim; ++i) {
            double gw = 0.0;
            for (int o = 0; o < dim; ++o) gw += gr[o] * w2[static_cast<std::size_t>(o) * dim + i];
            for (int j = 0; j < dim; ++j) dW1[static_cast<std::size_t>(i) * dim + j] += gw * xi[j];
            db1[static_cast<std::size_t>(i)] += gw;
        }
    }
    const auto close = [](const std::vector<double>& a, const std::vector<double>& b) {
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(std::abs(a[i] - b[i]) <= 1e-12 * std::max(1.0, std::abs(b[i])));
    };
    close(grads[0], dW1);
    close(grads[1], db1);
    close(grads[2], dW2);
    close(grads[3], db2);
}

TEST_CASE("backward matches central finite differences") {
    const ModelSpec spec = default_model_spec(31);
    ModelParameters model = build_model(spec);
    SplitMix64 rng(32);
    const std::size_t n = 6;
    const auto x = random_batch(rng, n, spec.input_dim);
    auto y = random_batch(rng, n, spec.output_dim);

    ForwardCache cache;
    const auto out = forward(spec, model, x, n, &cache);
    const auto [loss, loss_grad] = loss_mse(out, y, n, spec.output_dim);
    const auto grads = backward(spec, model, cache, loss_grad);

    const double h = 1e-5;
    for (std::size_t gi = 0; gi < model.groups.size(); ++gi) {
        auto& values = model.groups[gi].values;
        const std::size_t samples = std::min<std::size_t>(10, values.size());
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t idx = rng.next_below(values.size());
            const double keep = values[idx];
            values[idx] = keep + h;
            const double up = full_loss(spec, model, x, y, n);
            values[idx] = keep - h;
            const double down = full_loss(spec, model, x, y, n);
            values[idx] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double an = grads[gi][idx];
            CHECK(std::abs(fd - an) <= std::max(1e-8, 1e-5 * std::max(std::abs(fd), std::abs(an))));
        }
    }
}

TEST_CASE("backward rejects a stale cache") {
    const ModelSpec spec = default_model_spec(41);
    ModelParameters model = build_model(spec);
    SplitMix64 rng(42);
    const std::size_t n = 3;
    const auto x = random_batch(rng, n, spec.input_dim);
    ForwardCache cache;
    forward(spec, model, x, n, &cache);

    model.version++;  // parameters notionally changed
    const std::vector<double> lg(n * static_cast<std::size_t>(spec.output_dim), 0.0);
    CHECK_THROWS_AS(backward(spec, model, cache, lg), ContractViolation);
}

TEST_CASE("forward and backward are bit-reproducible") {
    const ModelSpec spec = default_model_spec(51);
    const ModelParameters model = build_model(spec);
    SplitMix64 rng(52);
    const std::size_t n = 5;
    const auto x = random_batch(rng, n, spec.input_dim);
    const auto y = random_batch(rng, n, spec.output_dim);

    ForwardCache ca, cb;
    const auto oa = forward(spec, model, x, n, &ca);
    const auto ob = forward(spec, model, x, n, &cb);
    CHECK(bitwise_equal(oa, ob));
    const auto ga = backward(spec, model, ca, loss_mse(oa, y, n, spec.output_dim).second);
    const auto gb = backward(spec, model, cb, loss_mse(ob, y, n, spec.output_dim).second);
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(bitwise_equal(ga[i], gb[i]));
}

TEST_CASE("loss_mse") {
    const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
    SUBCASE("zero at equality") {
        const auto [loss, grad] = loss_mse(a, a, 2, 2);
        CHECK(loss == 0.0);
        for (double g : grad) CHECK(g == 0.0);
    }
    SUBCASE("unit residuals give loss 1") {
        std::vector<double> b(a);
        for (auto& v : b) v -= 1.0;
        const auto [loss, grad] = loss_mse(a, b, 2, 2);
        CHECK(loss == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("gradient matches finite differences") {
        SplitMix64 rng(61);
        std::vector<double> out(12), tgt(12);
        for (auto& v : out) v = rng.next_normal();
        for (auto& v : tgt) v = rng.next_normal();
        const auto [loss, grad] = loss_mse(out, tgt, 3, 4);
        const double h = 1e-6;
        for (std::size_t i = 0; i < out.size(); ++i) {
            auto up = out, down = out;
            up[i] += h;
            down[i] -= h;
            const double fd = (loss_mse(up, tgt, 3, 4).first - loss_mse(down, tgt, 3, 4).first) / (2 * h);
            CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(loss_mse(a, {1.0}, 2, 2), ContractViolation);
    }
}

TEST_CASE("head is the only from-scratch module and gets lambda 0 under MAPS") {
    const ModelSpec spec = default_model_spec(71);
    const ModelParameters model = build_model(spec);
    ProximityPolicy maps;
    maps.mode = ProximityMode::MAPS;
    maps.lambda_max = 2.0;
    for (const auto& g : model.groups) {
        const double lk = assign_lambda(g.module_index, model.module_count, maps, g);
        if (g.from_scratch) {
            CHECK(g.module_index == 6);
            CHECK(lk == 0.0);
        } else {
            CHECK(g.module_index < 6);
            CHECK(lk > 0.0);
        }
    }
}
