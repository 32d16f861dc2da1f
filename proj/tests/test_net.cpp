#include <gtest/gtest.h>

#include <filesystem>

#include "densedet/loss.hpp"
#include "densedet/net.hpp"

using namespace densedet;

namespace {

Tensor random_input(int size, uint64_t seed) {
    RngStream rng(seed);
    Tensor t({3, size, size});
    for (size_t i = 0; i < t.numel(); ++i) t[i] = float(rng.uniform());
    return t;
}

}  // namespace

TEST(Net, ZeroImageZeroInitHeadGivesZeroOutputs) {
    DetectorNet net(4, 16, 123);
    Tensor zero({3, 64, 64});
    PredictionGrid grid = net.forward(zero);
    for (size_t i = 0; i < grid.head.numel(); ++i) EXPECT_EQ(grid.head[i], 0.0f);
}

TEST(Net, OutputsFinite) {
    DetectorNet net(4, 16, 5);
    PredictionGrid grid = net.forward(random_input(64, 9));
    EXPECT_TRUE(grid.head.all_finite());
    EXPECT_EQ(grid.G, 8);
}

TEST(Net, DeterministicForward) {
    DetectorNet net(3, 16, 77);
    Tensor in = random_input(64, 1);
    PredictionGrid a = net.forward(in);
    PredictionGrid b = net.forward(in);
    EXPECT_TRUE(a.head == b.head);
}

TEST(Net, RejectsBadShape) {
    DetectorNet net(3, 16, 77);
    Tensor bad({3, 60, 60});  // not divisible by stride
    EXPECT_THROW(net.forward(bad), RuntimeError);
}

TEST(Net, CheckpointRoundTripsBitExact) {
    namespace fs = std::filesystem;
    DetectorNet net(5, 16, 3);
    std::string p = (fs::temp_directory_path() / "densedet_ckpt_test").string();
    net.save(p, {{"dataset_fingerprint", "abc"}});
    std::map<std::string, std::string> meta;
    DetectorNet back = DetectorNet::load(p, &meta);
    EXPECT_EQ(meta["dataset_fingerprint"], "abc");

    Tensor in = random_input(64, 2);
    PredictionGrid a = net.forward(in);
    PredictionGrid b = back.forward(in);
    EXPECT_TRUE(a.head == b.head);
    fs::remove(p);
}

// Backprop through the full stack against central finite differences on
// a synthetic quadratic objective 0.5 * sum(head^2).
TEST(Net, BackpropMatchesFiniteDifferences) {
    DetectorNet net(2, 4, 21);
    Tensor in = random_input(32, 3);

    auto loss_of = [&](DetectorNet& n) {
        PredictionGrid g = n.forward(in);
        double s = 0;
        for (size_t i = 0; i < g.head.numel(); ++i) s += 0.5 * double(g.head[i]) * g.head[i];
        return s;
    };

    // give the zero-init head nonzero weights so gradients reach everything
    {
        RngStream rng(55);
        auto& head = net.layers().back();
        for (size_t i = 0; i < head.w.numel(); ++i) head.w[i] = float(rng.normal() * 0.1);
    }

    Activations acts;
    PredictionGrid grid = net.forward(in, &acts);
    Tensor dHead(grid.head.shape());
    for (size_t i = 0; i < dHead.numel(); ++i) dHead[i] = grid.head[i];
    net.zero_grad();
    net.backward(acts, dHead);

    // Per-coordinate differencing of a float network drowns in rounding
    // noise, so check the directional derivative per parameter tensor:
    // perturb the whole tensor along a random direction u and compare
    // the loss delta with <grad, u>.
    RngStream dir_rng(99);
    auto params = net.params();
    for (auto& p : params) {
        std::vector<float> u(p.value->numel());
        for (auto& v : u) v = float(dir_rng.normal());
        double analytic = 0;
        for (size_t i = 0; i < u.size(); ++i) analytic += double((*p.grad)[i]) * u[i];

        std::vector<float> orig(p.value->numel());
        for (size_t i = 0; i < orig.size(); ++i) orig[i] = (*p.value)[i];
        float h = 1e-5f;
        for (size_t i = 0; i < u.size(); ++i) (*p.value)[i] = orig[i] + h * u[i];
        double lp = loss_of(net);
        for (size_t i = 0; i < u.size(); ++i) (*p.value)[i] = orig[i] - h * u[i];
        double lm = loss_of(net);
        for (size_t i = 0; i < u.size(); ++i) (*p.value)[i] = orig[i];

        double fd = (lp - lm) / (2.0 * double(h));
        double denom = std::max(1.0, std::abs(fd));
        EXPECT_NEAR(analytic, fd, 2e-2 * denom) << p.name;
    }
    EXPECT_FALSE(params.empty());
}

TEST(Decode, UniformLogitsGiveCenterExpectation) {
    std::vector<float> logits(16, 0.7f);
    std::vector<double> probs(16);
    EXPECT_NEAR(softmax_expectation(logits.data(), 16, probs.data()), 7.5, 1e-9);
}

TEST(Decode, OneHotMassGivesBinIndex) {
    for (int k : {0, 3, 15}) {
        std::vector<float> logits(16, -30.0f);
        logits[size_t(k)] = 30.0f;
        std::vector<double> probs(16);
        EXPECT_NEAR(softmax_expectation(logits.data(), 16, probs.data()), double(k), 1e-6);
    }
}

TEST(Decode, TwoPointMassInterpolates) {
    std::vector<float> logits(16, -40.0f);
    logits[3] = 0.0f;
    logits[4] = 0.0f;  // 0.5 / 0.5 on bins 3 and 4
    std::vector<double> probs(16);
    EXPECT_NEAR(softmax_expectation(logits.data(), 16, probs.data()), 3.5, 1e-6);
}

// A two-bin distribution with weights (ceil-d, d-floor) reproduces any
// continuous d in [0, B-1] through the expectation decode.
TEST(Decode, OptimalTwoPointDistributionRoundTrips) {
    RngStream rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        double d = rng.uniform() * 15.0;
        int l = int(std::floor(d));
        if (l >= 15) l = 14;
        double wl = (l + 1) - d, wr = d - l;
        std::vector<float> logits(16, -30.0f);
        logits[size_t(l)] = wl > 0 ? float(std::log(wl)) : -30.0f;
        logits[size_t(l + 1)] = wr > 0 ? float(std::log(wr)) : -30.0f;
        std::vector<double> probs(16);
        EXPECT_NEAR(softmax_expectation(logits.data(), 16, probs.data()), d, 1e-6);
    }
}

TEST(Decode, GridDecodeClampsToImage) {
    PredictionGrid grid;
    grid.G = 4;
    grid.nc = 2;
    grid.nbins = 16;
    grid.head = Tensor({2 + 64, 4, 4});
    // huge right-side distance at every cell: mass on last bin
    for (int s = 0; s < 4; ++s)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) grid.head.at(2 + s * 16 + 15, i, j) = 40.0f;
    auto boxes = decode_boxes(grid);
    for (const auto& b : boxes) {
        EXPECT_GE(b.x1, 0.0f);
        EXPECT_LE(b.x2, 1.0f);
        EXPECT_GE(b.y1, 0.0f);
        EXPECT_LE(b.y2, 1.0f);
    }
}
