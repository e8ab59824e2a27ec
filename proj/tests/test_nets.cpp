#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "cocoa/error.hpp"
#include "cocoa/nets.hpp"
#include "cocoa/rng.hpp"

using namespace cocoa;

namespace {

// 0.5 * |f(x) - y|^2 and its analytic parameter gradient for any Mlp.
double mlp_loss(const Mlp& net, const std::vector<double>& x, const std::vector<double>& y) {
    const std::vector<double> out = net.forward(x);
    double l = 0.0;
    for (size_t i = 0; i < out.size(); ++i) l += 0.5 * (out[i] - y[i]) * (out[i] - y[i]);
    return l;
}

std::vector<double> mlp_loss_grad(const Mlp& net, const std::vector<double>& x,
                                  const std::vector<double>& y) {
    Mlp::Workspace ws;
    const std::vector<double> out = net.forward(x, ws);
    std::vector<double> dy(out.size());
    for (size_t i = 0; i < out.size(); ++i) dy[i] = out[i] - y[i];
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(ws, dy, grad);
    return grad;
}

} // namespace

TEST_CASE("nets: gated relu splits and subtracts") {
    const std::vector<double> out = relu_g({1.0, -2.0, 3.0, 0.5, -1.0, 4.0});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == doctest::Approx(1.0 - 0.5)); // relu(1) - relu(0.5)
    CHECK(out[1] == doctest::Approx(0.0));       // relu(-2) - relu(-1)
    CHECK(out[2] == doctest::Approx(3.0 - 4.0));
    CHECK_THROWS_AS(relu_g({1.0, 2.0, 3.0}), Error);
}

TEST_CASE("nets: mlp forward matches a hand computation") {
    Rng rng(0);
    Mlp net({2, 2, 1}, rng);
    // overwrite with known parameters: layer 1 W=[[1,2],[3,4]] b=[0.5,-0.5],
    // layer 2 W=[[1,-1]] b=[0.25]
    net.params() = {1, 2, 3, 4, 0.5, -0.5, 1, -1, 0.25};
    const std::vector<double> out = net.forward({1.0, -1.0});
    // pre1 = (1-2+0.5, 3-4-0.5) = (-0.5, -1.5) -> relu -> (0, 0) -> out 0.25
    REQUIRE(out.size() == 1);
    CHECK(out[0] == doctest::Approx(0.25));
    const std::vector<double> out2 = net.forward({1.0, 1.0});
    // pre1 = (3.5, 6.5) -> out = 3.5 - 6.5 + 0.25
    CHECK(out2[0] == doctest::Approx(-2.75));
}

TEST_CASE("nets: mlp backward agrees with finite differences") {
    Rng rng(21);
    Mlp net({3, 8, 4, 2}, rng);
    const std::vector<double> x = {0.3, -0.7, 1.1};
    const std::vector<double> y = {0.5, -0.25};
    const std::vector<double> analytic = mlp_loss_grad(net, x, y);
    Rng pick(99);
    const double err = finite_diff_check([&] { return mlp_loss(net, x, y); }, net.params(),
                                         analytic, 50, 1e-5, pick);
    CHECK(err < 1e-4);
}

TEST_CASE("nets: mlp backward propagates input cotangents") {
    Rng rng(22);
    Mlp net({2, 6, 1}, rng);
    std::vector<double> x = {0.4, -0.2};
    Mlp::Workspace ws;
    net.forward(x, ws);
    std::vector<double> grad(net.param_count(), 0.0), dx(2, 0.0);
    net.backward(ws, {1.0}, grad, &dx);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
        std::vector<double> xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (net.forward(xp)[0] - net.forward(xm)[0]) / (2 * h);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("nets: hindsight hypernet gradient check") {
    for (const bool complement : {false, true}) {
        CAPTURE(complement);
        Rng rng(31);
        HindsightHyperNet net(3, 2, 4, 8, 8, complement, rng);
        const std::vector<double> sf = {0.2, 0.8, -0.4};
        const std::vector<double> of = {1.0, 0.0};
        const std::vector<double> logits = {0.1, -0.3, 0.5, 0.0};
        const std::vector<double> target = {1.0, 0.0, -1.0, 0.5};

        const auto loss = [&] {
            const std::vector<double> out = net.forward(sf, of, logits);
            double l = 0.0;
            for (size_t i = 0; i < out.size(); ++i)
                l += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
            return l;
        };
        HindsightHyperNet::Workspace ws;
        const std::vector<double> out = net.forward(sf, of, logits, ws);
        std::vector<double> dout(out.size());
        for (size_t i = 0; i < out.size(); ++i) dout[i] = out[i] - target[i];
        std::vector<double> analytic(net.param_count(), 0.0);
        net.backward(ws, dout, analytic);

        Rng pick(7);
        const double err = finite_diff_check(loss, net.params(), analytic, 50, 1e-5, pick);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("nets: masked reward model prediction and exact straight-through region") {
    Rng rng(41);
    MaskedRewardModel model(4, 2, rng);
    // strictly positive features keep every relu gate active, where the
    // straight-through gradient coincides with the true one
    const std::vector<double> x = {0.5, 1.25, 0.75, 2.0};
    const double target = 1.5;
    const auto loss = [&] {
        const double p = model.predict(x, 1);
        return 0.5 * (p - target) * (p - target);
    };
    std::vector<double> analytic(model.param_count(), 0.0);
    model.backward(x, 1, model.predict(x, 1) - target, analytic);
    Rng pick(3);
    const double err = finite_diff_check(loss, model.params(), analytic, 50, 1e-5, pick);
    CHECK(err < 1e-4);
}

TEST_CASE("nets: masked reward model bits threshold the gated input") {
    Rng rng(43);
    MaskedRewardModel model(3, 1, rng);
    // masks start at 1, so gates equal the raw features
    const std::vector<uint8_t> bits = model.encode_bits({0.2, 0.04, 0.0}, 0, 0.05);
    REQUIRE(bits.size() == 3);
    CHECK(bits[0] == 1);
    CHECK(bits[1] == 0);
    CHECK(bits[2] == 0);
}

TEST_CASE("nets: masked reward model decay soft-thresholds masks and shrinks readout") {
    Rng rng(44);
    MaskedRewardModel model(2, 1, rng);
    model.params()[0] = 0.5;   // mask coords
    model.params()[1] = 0.002;
    const double r0 = model.params()[2], r1 = model.params()[3];
    model.apply_decay(0.1, 0.03, 0.5);
    CHECK(model.params()[0] == doctest::Approx(0.5 - 0.1 * 0.03));
    CHECK(model.params()[1] == 0.0); // below the threshold: clamped to zero
    CHECK(model.params()[2] == doctest::Approx(r0 * (1.0 - 0.1 * 0.5)));
    CHECK(model.params()[3] == doctest::Approx(r1 * (1.0 - 0.1 * 0.5)));
}

TEST_CASE("nets: adamw first step matches the closed form") {
    AdamW opt(1, 0.1);
    std::vector<double> p = {1.0};
    std::vector<double> g = {2.0};
    opt.step(p, g);
    // bias-corrected mhat = 2, vhat = 4 after one step
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("nets: adamw decoupled decay applies after the update") {
    AdamW opt(1, 0.1, 0.5);
    std::vector<double> p = {1.0};
    std::vector<double> g = {2.0};
    opt.step(p, g);
    const double after_adam = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
    CHECK(p[0] == doctest::Approx(after_adam * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("nets: adamw clips the global gradient norm") {
    AdamW opt(2, 1.0, 0.0, 1.0);
    std::vector<double> p = {0.0, 0.0};
    std::vector<double> g = {3.0, 4.0}; // norm 5, scaled to (0.6, 0.8)
    opt.step(p, g);
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
}

TEST_CASE("nets: parameter snapshots round-trip") {
    const std::vector<double> params = {1.0, -0.5, 3.14159265358979312, 1e-17, -2e300};
    const std::string path = "test_params_roundtrip.txt";
    save_params(path, params);
    const std::vector<double> back = load_params(path);
    REQUIRE(back.size() == params.size());
    for (size_t i = 0; i < params.size(); ++i) CHECK(back[i] == params[i]);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_params("definitely_missing_file.txt"), Error);
}
