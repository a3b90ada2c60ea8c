#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "busi/errors.hpp"
#include "busi/nn.hpp"
#include "busi/rng.hpp"

using namespace busi;
using namespace busi::nn;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

// Random values kept clear of the given kink locations so finite
// differences never cross a non-differentiable point.
Tensor random_away_from(std::vector<int> shape, Rng& rng,
                        const std::vector<double>& kinks, double margin,
                        double lo, double hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) {
        for (;;) {
            double c = rng.uniform(lo, hi);
            bool clear = true;
            for (double k : kinks)
                if (std::abs(c - k) < margin) clear = false;
            if (clear) {
                v = c;
                break;
            }
        }
    }
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

struct CheckResult {
    double max_rel_param = 0.0;
    double max_rel_input = 0.0;
};

// Central finite differences of L(x) = <w, layer(x)> against the
// analytic backward pass, over every parameter element and every
// input element. The layers are piecewise linear or smooth, so the
// comparison is essentially exact away from kinks.
CheckResult gradient_check(Layer& layer, Tensor x, std::uint64_t weight_seed) {
    Tensor y0 = layer.forward(x, false);
    Rng wrng(mix_seed(weight_seed, "loss-weights"));
    Tensor w(y0.shape());
    for (auto& v : w.storage()) v = wrng.uniform(-1.0, 1.0);

    std::vector<Param*> params;
    layer.collect_params(params);

    for (auto* p : params) p->zero_grad();
    layer.forward(x, true);
    Tensor dx = layer.backward(w);
    REQUIRE(dx.shape() == x.shape());
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    const double h = 1e-5;
    auto loss = [&]() { return dot(w, layer.forward(x, false)); };

    CheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            double saved = p->value[i];
            p->value[i] = saved + h;
            double lp = loss();
            p->value[i] = saved - h;
            double lm = loss();
            p->value[i] = saved;
            double fd = (lp - lm) / (2.0 * h);
            result.max_rel_param =
                std::max(result.max_rel_param, rel_err(fd, analytic[pi][i]));
        }
    }
    for (std::int64_t i = 0; i < x.size(); ++i) {
        double saved = x[i];
        x[i] = saved + h;
        double lp = loss();
        x[i] = saved - h;
        double lm = loss();
        x[i] = saved;
        double fd = (lp - lm) / (2.0 * h);
        result.max_rel_input = std::max(result.max_rel_input, rel_err(fd, dx[i]));
    }
    return result;
}

constexpr double kGradTol = 2e-4;

void init_layer(Layer& layer, std::uint64_t seed) {
    std::vector<Param*> params;
    layer.collect_params(params);
    initialize_params(params, seed);
}

}  // namespace

TEST_CASE("PadSpec resolution") {
    SUBCASE("valid pads nothing") {
        CHECK(PadSpec::valid().resolve(10, 10, 3, 1) == std::array<int, 4>{0, 0, 0, 0});
    }
    SUBCASE("fixed and symmetric pass through") {
        CHECK(PadSpec::fixed(1, 2, 3, 4).resolve(9, 9, 3, 1) ==
              std::array<int, 4>{1, 2, 3, 4});
        CHECK(PadSpec::symmetric(3).resolve(9, 9, 3, 1) ==
              std::array<int, 4>{3, 3, 3, 3});
    }
    SUBCASE("same puts the odd pad cell at bottom/right") {
        // 224 -> 112 under a 7x7 stride-2 kernel needs 5 total: 2 top, 3 bottom
        CHECK(PadSpec::same().resolve(224, 224, 7, 2) ==
              std::array<int, 4>{2, 3, 2, 3});
        CHECK(PadSpec::same().resolve(14, 14, 3, 1) == std::array<int, 4>{1, 1, 1, 1});
    }
    SUBCASE("same never pads negatively") {
        // 4 -> 2 under a 2x2 stride-2 kernel tiles exactly: no padding,
        // and max(., 0) keeps the formula from going negative.
        CHECK(PadSpec::same().resolve(4, 4, 2, 2) == std::array<int, 4>{0, 0, 0, 0});
        // 5 -> 3 needs one spare cell, placed at the bottom/right.
        CHECK(PadSpec::same().resolve(5, 5, 2, 2) == std::array<int, 4>{0, 1, 0, 1});
    }
}

TEST_CASE("layer output shapes") {
    Rng rng(7);

    Conv2d same_s1("c1", 3, 5, 3, 1, PadSpec::same(), true);
    CHECK(same_s1.forward(random_tensor({1, 8, 8, 3}, rng), false).shape() ==
          std::vector<int>{1, 8, 8, 5});

    Conv2d same_s2("c2", 3, 5, 3, 2, PadSpec::same(), true);
    CHECK(same_s2.forward(random_tensor({1, 8, 8, 3}, rng), false).shape() ==
          std::vector<int>{1, 4, 4, 5});

    Conv2d valid_k3("c3", 3, 5, 3, 1, PadSpec::valid(), true);
    CHECK(valid_k3.forward(random_tensor({1, 8, 8, 3}, rng), false).shape() ==
          std::vector<int>{1, 6, 6, 5});

    // the resnet-style stem pool: 3x3 stride 2 with one pad cell
    MaxPool2d stem_pool("p1", 3, 2, PadSpec::fixed(1, 1, 1, 1));
    CHECK(stem_pool.forward(random_tensor({1, 10, 10, 2}, rng), false).shape() ==
          std::vector<int>{1, 5, 5, 2});

    GlobalAvgPool gap("gap");
    CHECK(gap.forward(random_tensor({2, 3, 5, 6}, rng), false).shape() ==
          std::vector<int>{2, 6});

    DepthwiseConv2d dw("dw", 4, 3, 2, PadSpec::same());
    CHECK(dw.forward(random_tensor({1, 9, 9, 4}, rng), false).shape() ==
          std::vector<int>{1, 5, 5, 4});
}

TEST_CASE("four 2x2 pools reduce 224 to 14") {
    MaxPool2d pool("pool", 2, 2, PadSpec::valid());
    Rng rng(3);
    Tensor x = random_tensor({1, 224, 224, 1}, rng);
    for (int i = 0; i < 4; ++i) x = pool.forward(x, false);
    CHECK(x.shape() == std::vector<int>{1, 14, 14, 1});
}

TEST_CASE("global average pool averages exactly") {
    Tensor x({1, 2, 2, 2});
    // channel 0: 1,2,3,4 -> 2.5 ; channel 1: 10,20,30,40 -> 25
    double vals[] = {1, 10, 2, 20, 3, 30, 4, 40};
    std::copy(std::begin(vals), std::end(vals), x.data());
    GlobalAvgPool gap("gap");
    Tensor y = gap.forward(x, false);
    CHECK(y.at(0, 0) == doctest::Approx(2.5));
    CHECK(y.at(0, 1) == doctest::Approx(25.0));
}

TEST_CASE("max pool picks the maximum and routes gradient to it") {
    Tensor x({1, 2, 2, 1});
    x[0] = 1.0;
    x[1] = 5.0;
    x[2] = -2.0;
    x[3] = 3.0;
    MaxPool2d pool("pool", 2, 2, PadSpec::valid());
    Tensor y = pool.forward(x, true);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == 5.0);
    Tensor g({1, 1, 1, 1});
    g[0] = 2.0;
    Tensor dx = pool.backward(g);
    CHECK(dx[0] == 0.0);
    CHECK(dx[1] == 2.0);
    CHECK(dx[2] == 0.0);
    CHECK(dx[3] == 0.0);
}

TEST_CASE("relu clamps and masks") {
    Tensor x({1, 1, 1, 4});
    x[0] = -2.0;
    x[1] = 0.5;
    x[2] = 3.0;
    x[3] = 9.0;

    Relu plain("relu");
    Tensor y = plain.forward(x, false);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.5);
    CHECK(y[3] == 9.0);

    Relu relu6("relu6", 6.0);
    Tensor y6 = relu6.forward(x, true);
    CHECK(y6[0] == 0.0);
    CHECK(y6[3] == 6.0);  // clamped
    Tensor g = Tensor::full({1, 1, 1, 4}, 1.0);
    Tensor dx = relu6.backward(g);
    CHECK(dx[0] == 0.0);  // below zero: no gradient
    CHECK(dx[1] == 1.0);
    CHECK(dx[2] == 1.0);
    CHECK(dx[3] == 0.0);  // clamped region: no gradient
}

TEST_CASE("gradient check: Conv2d stride 1, same padding, bias") {
    Conv2d conv("conv", 3, 4, 3, 1, PadSpec::same(), true);
    init_layer(conv, 11);
    Rng rng(21);
    auto r = gradient_check(conv, random_tensor({2, 5, 5, 3}, rng), 31);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: Conv2d stride 2 valid, and 1x1") {
    Rng rng(22);
    Conv2d s2("conv_s2", 2, 3, 3, 2, PadSpec::valid(), true);
    init_layer(s2, 12);
    auto r = gradient_check(s2, random_tensor({2, 7, 7, 2}, rng), 32);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);

    Conv2d one("conv_1x1", 4, 6, 1, 1, PadSpec::valid(), false);
    init_layer(one, 13);
    auto r1 = gradient_check(one, random_tensor({2, 3, 3, 4}, rng), 33);
    CHECK(r1.max_rel_param < kGradTol);
    CHECK(r1.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: DepthwiseConv2d") {
    DepthwiseConv2d dw("dw", 4, 3, 2, PadSpec::same());
    init_layer(dw, 14);
    Rng rng(23);
    auto r = gradient_check(dw, random_tensor({2, 5, 5, 4}, rng), 34);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: BatchNorm with non-trivial frozen statistics") {
    BatchNorm bn("bn", 4);
    init_layer(bn, 15);
    std::vector<Param*> buffers;
    bn.collect_buffers(buffers);
    REQUIRE(buffers.size() == 2);
    Rng rng(24);
    for (auto* b : buffers)
        for (auto& v : b->value.storage())
            v = b->name.find("variance") != std::string::npos ? rng.uniform(0.5, 2.0)
                                                              : rng.uniform(-1.0, 1.0);
    std::vector<double> stats_before;
    for (auto* b : buffers)
        stats_before.insert(stats_before.end(), b->value.storage().begin(),
                            b->value.storage().end());

    auto r = gradient_check(bn, random_tensor({2, 3, 3, 4}, rng), 35);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);

    // frozen statistics are never updated by forward or backward
    std::vector<double> stats_after;
    for (auto* b : buffers)
        stats_after.insert(stats_after.end(), b->value.storage().begin(),
                           b->value.storage().end());
    CHECK(stats_before == stats_after);

    // buffers are not trainable parameters
    std::vector<Param*> params;
    bn.collect_params(params);
    CHECK(params.size() == 2);  // gamma, beta only
    for (auto* b : buffers) CHECK_FALSE(b->trainable);
}

TEST_CASE("gradient check: Dense") {
    Dense dense("fc", 7, 4);
    init_layer(dense, 16);
    Rng rng(25);
    auto r = gradient_check(dense, random_tensor({3, 7}, rng), 36);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: pooling and activations") {
    Rng rng(26);

    MaxPool2d pool("pool", 2, 2, PadSpec::valid());
    auto rp = gradient_check(pool, random_tensor({2, 4, 4, 3}, rng), 37);
    CHECK(rp.max_rel_input < kGradTol);

    MaxPool2d stem("stem", 3, 2, PadSpec::fixed(1, 1, 1, 1));
    auto rs = gradient_check(stem, random_tensor({2, 6, 6, 2}, rng), 38);
    CHECK(rs.max_rel_input < kGradTol);

    GlobalAvgPool gap("gap");
    auto rg = gradient_check(gap, random_tensor({2, 3, 3, 4}, rng), 39);
    CHECK(rg.max_rel_input < kGradTol);

    Relu relu("relu");
    auto rr = gradient_check(
        relu, random_away_from({2, 3, 3, 4}, rng, {0.0}, 0.05, -1.0, 1.0), 40);
    CHECK(rr.max_rel_input < kGradTol);

    Relu relu6("relu6", 6.0);
    auto r6 = gradient_check(
        relu6, random_away_from({2, 3, 3, 4}, rng, {0.0, 6.0}, 0.05, -2.0, 8.0), 41);
    CHECK(r6.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: BottleneckBlock with projection and identity") {
    Rng rng(27);

    BottleneckBlock proj("block_proj", 4, 2, 6, 2, /*projection=*/true);
    init_layer(proj, 17);
    auto rp = gradient_check(proj, random_tensor({2, 4, 4, 4}, rng), 42);
    CHECK(rp.max_rel_param < kGradTol);
    CHECK(rp.max_rel_input < kGradTol);

    BottleneckBlock ident("block_id", 6, 2, 6, 1, /*projection=*/false);
    init_layer(ident, 18);
    auto ri = gradient_check(ident, random_tensor({2, 3, 3, 6}, rng), 43);
    CHECK(ri.max_rel_param < kGradTol);
    CHECK(ri.max_rel_input < kGradTol);
}

TEST_CASE("gradient check: full sequential stack") {
    Sequential net("net");
    net.emplace<Conv2d>("conv", 3, 4, 3, 1, PadSpec::same(), true);
    net.emplace<BatchNorm>("bn", 4);
    net.emplace<Relu>("relu");
    net.emplace<MaxPool2d>("pool", 2, 2, PadSpec::valid());
    net.emplace<GlobalAvgPool>("gap");
    net.emplace<Dense>("fc", 4, 3);
    init_layer(net, 19);

    Rng rng(28);
    auto r = gradient_check(net, random_tensor({2, 6, 6, 3}, rng), 44);
    CHECK(r.max_rel_param < kGradTol);
    CHECK(r.max_rel_input < kGradTol);
}

TEST_CASE("sequential traces layer shapes") {
    Sequential net("net");
    net.emplace<Conv2d>("conv", 1, 2, 3, 2, PadSpec::same(), false);
    net.emplace<GlobalAvgPool>("gap");
    init_layer(net, 20);
    Rng rng(29);
    std::vector<std::pair<std::string, std::vector<int>>> trace;
    Tensor y = net.forward_traced(random_tensor({1, 8, 8, 1}, rng), trace);
    REQUIRE(trace.size() == 2);
    CHECK(trace[0].first == "conv");
    CHECK(trace[0].second == std::vector<int>{1, 4, 4, 2});
    CHECK(trace[1].second == std::vector<int>{1, 2});
    CHECK(y.shape() == std::vector<int>{1, 2});
}

TEST_CASE("initialize_params is deterministic and respects Init rules") {
    auto build = [](std::uint64_t seed) {
        Sequential net("net");
        net.emplace<Conv2d>("conv", 3, 8, 3, 1, PadSpec::same(), true);
        net.emplace<Dense>("fc", 8, 4, Init::glorot_uniform);
        std::vector<Param*> params;
        net.collect_params(params);
        initialize_params(params, seed);
        std::vector<std::vector<double>> values;
        for (auto* p : params) values.push_back(p->value.storage());
        return values;
    };

    auto a = build(5);
    auto b = build(5);
    auto c = build(6);
    CHECK(a == b);
    CHECK(a != c);

    // glorot_uniform stays inside its bound, biases stay zero
    Sequential net("net");
    auto* conv = net.emplace<Conv2d>("conv", 3, 8, 3, 1, PadSpec::same(), true);
    auto* fc = net.emplace<Dense>("fc", 8, 4, Init::glorot_uniform);
    (void)conv;
    (void)fc;
    std::vector<Param*> params;
    net.collect_params(params);
    initialize_params(params, 5);
    for (auto* p : params) {
        if (p->init == Init::zeros) {
            for (double v : p->value.storage()) CHECK(v == 0.0);
        } else if (p->init == Init::glorot_uniform) {
            double bound = std::sqrt(6.0 / (p->fan_in + p->fan_out));
            for (double v : p->value.storage()) {
                CHECK(v <= bound);
                CHECK(v >= -bound);
            }
        }
    }
}

TEST_CASE("softmax_rows is row-stochastic and numerically stable") {
    Tensor logits({2, 3});
    logits.at(0, 0) = 1000.0;
    logits.at(0, 1) = 999.0;
    logits.at(0, 2) = -1000.0;
    logits.at(1, 0) = -5.0;
    logits.at(1, 1) = 0.0;
    logits.at(1, 2) = 5.0;
    Tensor p = softmax_rows(logits);
    for (int i = 0; i < 2; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 3; ++j) {
            CHECK(std::isfinite(p.at(i, j)));
            CHECK(p.at(i, j) >= 0.0);
            sum += p.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    // softmax(1000, 999, -1000): the first two differ by e
    CHECK(p.at(0, 0) / p.at(0, 1) == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
    CHECK(p.at(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("layer misuse raises library errors") {
    Relu relu("relu");
    Tensor g({1, 2});
    CHECK_THROWS_AS(relu.backward(g), busi::Error);

    Conv2d conv("conv", 3, 4, 3, 1, PadSpec::same(), true);
    Rng rng(30);
    CHECK_THROWS_AS(conv.forward(random_tensor({1, 5, 5, 2}, rng), false),
                    ShapeError);

    Dense fc("fc", 4, 2);
    CHECK_THROWS_AS(fc.forward(random_tensor({1, 5}, rng), false), ShapeError);
}
