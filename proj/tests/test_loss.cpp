#include <gtest/gtest.h>

#include "densedet/assign.hpp"
#include "densedet/loss.hpp"

using namespace densedet;

namespace {

constexpr double kLn2 = 0.6931471805599453;

PredictionGrid random_grid(int G, int nc, int B, RngStream& rng, double scale = 2.0) {
    PredictionGrid g;
    g.G = G;
    g.nc = nc;
    g.nbins = B;
    g.head = Tensor({nc + 4 * B, G, G});
    for (size_t i = 0; i < g.head.numel(); ++i) g.head[i] = float(rng.uniform(-scale, scale));
    return g;
}

std::vector<LabeledBox> random_boxes(RngStream& rng, int nc, int count) {
    std::vector<LabeledBox> boxes;
    for (int b = 0; b < count; ++b) {
        LabeledBox lb;
        lb.class_id = int(rng.uniform_int(uint64_t(nc)));
        lb.w = float(rng.uniform(0.15, 0.5));
        lb.h = float(rng.uniform(0.15, 0.5));
        lb.cx = float(rng.uniform(lb.w / 2, 1 - lb.w / 2));
        lb.cy = float(rng.uniform(lb.h / 2, 1 - lb.h / 2));
        boxes.push_back(lb);
    }
    return boxes;
}

}  // namespace

// ---------------------------------------------------------------- BCE

TEST(Bce, PerfectPredictionIsZero) {
    std::vector<float> logits = {40.0f, -40.0f, 40.0f};
    std::vector<float> targets = {1.0f, 0.0f, 1.0f};
    std::vector<float> mask(3, 1.0f);
    EXPECT_NEAR(bce_loss(logits, targets, mask, 1), 0.0, 1e-9);
}

TEST(Bce, HalfConfidenceIsLn2) {
    EXPECT_NEAR(bce_loss({0.0f}, {1.0f}, {1.0f}, 1), kLn2, 1e-9);
}

TEST(Bce, MaskSelectsEntries) {
    std::vector<float> logits = {0.3f, 1.7f};
    std::vector<float> targets = {1.0f, 0.0f};
    double a = bce_loss({logits[0]}, {targets[0]}, {1.0f}, 1);
    EXPECT_NEAR(bce_loss(logits, targets, {1.0f, 0.0f}, 1), a, 1e-12);
}

TEST(Bce, StableAtLargeLogits) {
    for (float s : {50.0f, -50.0f}) {
        double v = bce_loss({s}, {0.0f}, {1.0f}, 1);
        EXPECT_TRUE(std::isfinite(v));
        v = bce_loss({s}, {1.0f}, {1.0f}, 1);
        EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(Bce, NormalizesByPositiveCount) {
    std::vector<float> logits = {0.0f, 0.0f};
    std::vector<float> targets = {1.0f, 1.0f};
    std::vector<float> mask = {1.0f, 1.0f};
    EXPECT_NEAR(bce_loss(logits, targets, mask, 4), 2 * kLn2 / 4, 1e-12);
    EXPECT_NEAR(bce_loss(logits, targets, mask, 0), 2 * kLn2, 1e-12);  // floor 1
}

TEST(Bce, GradientMatchesFiniteDifferences) {
    RngStream rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 1 + int(rng.uniform_int(6));
        std::vector<float> logits(static_cast<size_t>(n)), targets(static_cast<size_t>(n)), mask(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            logits[size_t(i)] = float(rng.uniform(-3, 3));
            targets[size_t(i)] = rng.uniform() < 0.5 ? 0.0f : 1.0f;
            mask[size_t(i)] = rng.uniform() < 0.3 ? 0.0f : 1.0f;
        }
        int npos = 1 + int(rng.uniform_int(3));
        std::vector<float> grad;
        bce_loss(logits, targets, mask, npos, &grad);
        for (int i = 0; i < n; ++i) {
            float h = 1e-4f;
            float orig = logits[size_t(i)];
            float hi = orig + h, lo = orig - h;
            logits[size_t(i)] = hi;
            double lp = bce_loss(logits, targets, mask, npos);
            logits[size_t(i)] = lo;
            double lm = bce_loss(logits, targets, mask, npos);
            logits[size_t(i)] = orig;
            // divide by the step actually applied after float rounding
            double fd = (lp - lm) / (double(hi) - double(lo));
            double denom = std::max(1e-6, std::abs(fd));
            EXPECT_LT(std::abs(grad[size_t(i)] - fd) / denom, 1e-3);
        }
    }
}

// --------------------------------------------------------------- CIoU

TEST(Ciou, IdenticalBoxesZero) {
    Box b{0.2f, 0.3f, 0.6f, 0.9f};
    EXPECT_NEAR(ciou_pair(b, b).loss, 0.0, 1e-9);
    EXPECT_NEAR(ciou_loss({b, b}, {b, b}, {1, 1}), 0.0, 1e-9);
}

TEST(Ciou, NoPositivesZero) {
    Box b{0, 0, 1, 1};
    EXPECT_EQ(ciou_loss({b}, {b}, {0}), 0.0);
}

TEST(Ciou, DisjointUnitSquaresHandValue) {
    // IoU 0, center distance^2 = 4, enclosing diagonal^2 = 10, v = 0:
    // loss = 1 + 4/10 = 1.4
    Box pred{0, 0, 1, 1}, target{2, 0, 3, 1};
    EXPECT_NEAR(ciou_pair(pred, target).loss, 1.4, 1e-6);
}

TEST(Ciou, DegenerateTargetRejected) {
    Box pred{0, 0, 1, 1}, target{0.5f, 0.5f, 0.5f, 0.9f};
    EXPECT_THROW(ciou_pair(pred, target), RuntimeError);
}

TEST(Ciou, GradientMatchesFiniteDifferences) {
    RngStream rng(17);
    int done = 0;
    while (done < 50) {
        Box t{float(rng.uniform(0, 0.4)), float(rng.uniform(0, 0.4)),
              float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.5, 1.0))};
        Box p{float(rng.uniform(0, 0.4)), float(rng.uniform(0, 0.4)),
              float(rng.uniform(0.5, 1.0)), float(rng.uniform(0.5, 1.0))};
        CiouResult r = ciou_pair(p, t);
        float* coords[4] = {&p.x1, &p.y1, &p.x2, &p.y2};
        bool used = false;
        for (int i = 0; i < 4; ++i) {
            float h = 1e-5f;
            float orig = *coords[i];
            float hi = orig + h, lo = orig - h;
            *coords[i] = hi;
            double lp = ciou_pair(p, t).loss;
            *coords[i] = lo;
            double lm = ciou_pair(p, t).loss;
            *coords[i] = orig;
            // divide by the step actually applied after float rounding
            double fd = (lp - lm) / (double(hi) - double(lo));
            double denom = std::max(1e-3, std::abs(fd));
            EXPECT_LT(std::abs(r.dpred[size_t(i)] - fd) / denom, 1e-4)
                << "coord " << i << " trial " << done;
            used = true;
        }
        if (used) ++done;
    }
}

// ---------------------------------------------------------------- DFL

TEST(Dfl, OneHotIntegerTargetNearZero) {
    std::vector<float> logits(16, -30.0f);
    logits[5] = 30.0f;
    EXPECT_LE(dfl_term(logits.data(), 16, 5.0f), 1e-6);
}

TEST(Dfl, UniformDistributionHalfTarget) {
    std::vector<float> logits(16, 0.0f);
    EXPECT_NEAR(dfl_term(logits.data(), 16, 3.5f), std::log(16.0), 1e-9);
}

TEST(Dfl, QuarterTargetTwoPointValue) {
    // mass 0.75/0.25 on bins 3/4, d = 3.25
    std::vector<float> logits(16, -40.0f);
    logits[3] = float(std::log(0.75));
    logits[4] = float(std::log(0.25));
    double expect = 0.75 * (-std::log(0.75)) + 0.25 * (-std::log(0.25));
    EXPECT_NEAR(dfl_term(logits.data(), 16, 3.25f), expect, 1e-6);
    EXPECT_NEAR(expect, 0.562335, 1e-6);
}

// grid-search oracle: among two-point distributions on bins 3/4 the
// (0.75, 0.25) split minimizes the loss at d = 3.25
TEST(Dfl, TwoPointOptimumByGridSearch) {
    double best_w = -1, best_loss = 1e9;
    for (int k = 1; k < 1000; ++k) {
        double w = k / 1000.0;
        std::vector<float> logits(16, -40.0f);
        logits[3] = float(std::log(w));
        logits[4] = float(std::log(1.0 - w));
        double loss = dfl_term(logits.data(), 16, 3.25f);
        if (loss < best_loss) {
            best_loss = loss;
            best_w = w;
        }
    }
    EXPECT_NEAR(best_w, 0.75, 1e-3);
    EXPECT_NEAR(best_loss, 0.562335, 1e-4);
}

TEST(Dfl, ClampDiagnostics) {
    std::vector<float> logits(2 * 8, 0.0f);
    int64_t clamps = 0;
    dfl_loss(logits, {-1.0f, 9.0f}, 8, &clamps);
    EXPECT_EQ(clamps, 2);
}

TEST(Dfl, GradientMatchesFiniteDifferences) {
    RngStream rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        int B = 8;
        std::vector<float> logits(static_cast<size_t>(B));
        for (auto& v : logits) v = float(rng.uniform(-2, 2));
        float d = float(rng.uniform(0, B - 1));
        std::vector<float> grad(size_t(B), 0.0f);
        dfl_term(logits.data(), B, d, grad.data(), 1.0);
        for (int b = 0; b < B; ++b) {
            float h = 1e-4f;
            float orig = logits[size_t(b)];
            float hi = orig + h, lo = orig - h;
            logits[size_t(b)] = hi;
            double lp = dfl_term(logits.data(), B, d);
            logits[size_t(b)] = lo;
            double lm = dfl_term(logits.data(), B, d);
            logits[size_t(b)] = orig;
            double fd = (lp - lm) / (double(hi) - double(lo));
            double denom = std::max(1e-4, std::abs(fd));
            EXPECT_LT(std::abs(grad[size_t(b)] - fd) / denom, 1e-3);
        }
    }
}

// --------------------------------------------------------- total loss

TEST(TotalLoss, WeightIsolationBce) {
    RngStream rng(3);
    PredictionGrid g = random_grid(4, 3, 8, rng);
    auto boxes = random_boxes(rng, 3, 2);
    TargetAssignment a = assign_targets(boxes, {32, 8}, 3, 8);
    std::vector<CfplInput> batch = {{&g, &a}};

    LossWeights w;
    w.ciou = 0;
    w.dfl = 0;
    w.bce = 1;
    CfplConfig off;
    LossBreakdown b = total_loss(batch, w, off);
    EXPECT_NEAR(b.total, b.bce, 1e-12);

    // cross-check against the standalone kernel
    std::vector<float> logits, targets, mask;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int c = 0; c < 3; ++c) {
                logits.push_back(g.cls(i, j, c));
                targets.push_back(a.is_fg(i, j) && a.cls(i, j) == c ? 1.0f : 0.0f);
                mask.push_back(1.0f);
            }
    EXPECT_NEAR(b.bce, bce_loss(logits, targets, mask, a.num_positive), 1e-9);
}

TEST(TotalLoss, PerfectPredictionsZero) {
    // box edges aligned with cell centers, so every side distance is an
    // integer and a one-hot bin distribution reproduces it exactly
    LabeledBox box{1, 0.5f, 0.5f, 0.75f, 0.75f};
    TargetAssignment a = assign_targets({box}, {32, 8}, 3, 8);
    PredictionGrid g;
    g.G = 4;
    g.nc = 3;
    g.nbins = 8;
    g.head = Tensor({3 + 32, 4, 4});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            for (int c = 0; c < 3; ++c)
                g.head.at(c, i, j) = (a.is_fg(i, j) && a.cls(i, j) == c) ? 60.0f : -60.0f;
            for (int s = 0; s < 4; ++s) {
                float d = a.is_fg(i, j) ? a.side(i, j, s) : 0.0f;
                int l = std::min(6, int(std::floor(d)));
                double wl = (l + 1) - d, wr = d - l;
                for (int bb = 0; bb < 8; ++bb) g.head.at(3 + s * 8 + bb, i, j) = -60.0f;
                // scale two-point log-weights up so the softmax is sharp
                if (wl > 0) g.head.at(3 + s * 8 + l, i, j) = float(60 + 30 * std::log(wl));
                if (wr > 0) g.head.at(3 + s * 8 + l + 1, i, j) = float(60 + 30 * std::log(wr));
            }
        }
    // side distances here are integers (box edges on cell boundaries), so
    // the one-hot construction is exact
    std::vector<CfplInput> batch = {{&g, &a}};
    LossBreakdown b = total_loss(batch, LossWeights{}, CfplConfig{});
    EXPECT_LT(b.total, 1e-4);
}

TEST(TotalLoss, MaskedNeverExceedsUnmasked) {
    RngStream rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        PredictionGrid g = random_grid(4, 3, 8, rng);
        auto boxes = random_boxes(rng, 3, 2);
        TargetAssignment a = assign_targets(boxes, {32, 8}, 3, 8);
        std::vector<CfplInput> batch = {{&g, &a}};
        CfplConfig on;
        on.enabled = true;
        on.whitelist = {0, 2};
        LossBreakdown with = total_loss(batch, LossWeights{}, on);
        LossBreakdown without = total_loss(batch, LossWeights{}, CfplConfig{});
        EXPECT_LE(with.bce, without.bce + 1e-12);
        EXPECT_LE(with.total, without.total + 1e-12);
        EXPECT_EQ(with.ciou, without.ciou);
        EXPECT_EQ(with.dfl, without.dfl);
    }
}

TEST(TotalLoss, DisabledIsBitExactBaseline) {
    RngStream rng(5);
    PredictionGrid g = random_grid(4, 3, 8, rng);
    auto boxes = random_boxes(rng, 3, 2);
    TargetAssignment a = assign_targets(boxes, {32, 8}, 3, 8);
    std::vector<CfplInput> batch = {{&g, &a}};
    CfplConfig off_with_whitelist;
    off_with_whitelist.enabled = false;
    off_with_whitelist.whitelist = {0, 1, 2};
    std::vector<Tensor> ga, gb;
    LossBreakdown x = total_loss(batch, LossWeights{}, off_with_whitelist, &ga);
    LossBreakdown y = total_loss(batch, LossWeights{}, CfplConfig{}, &gb);
    EXPECT_EQ(x.total, y.total);
    EXPECT_EQ(x.bce, y.bce);
    EXPECT_TRUE(ga[0] == gb[0]);
    EXPECT_EQ(x.masked_count, 0);
}

// full-loss gradient against finite differences on the head tensor
TEST(TotalLoss, HeadGradientMatchesFiniteDifferences) {
    RngStream rng(71);
    PredictionGrid g = random_grid(4, 2, 8, rng, 1.0);
    auto boxes = random_boxes(rng, 2, 2);
    TargetAssignment a = assign_targets(boxes, {32, 8}, 2, 8);
    std::vector<CfplInput> batch = {{&g, &a}};
    CfplConfig on;
    on.enabled = true;
    on.whitelist = {0};
    std::vector<Tensor> grads;
    LossBreakdown base = total_loss(batch, LossWeights{}, on, &grads);
    (void)base;

    RngStream pick(2);
    for (int k = 0; k < 60; ++k) {
        size_t i = pick.uniform_int(g.head.numel());
        float h = 1e-3f;
        float orig = g.head[i];
        g.head[i] = orig + h;
        double lp = total_loss(batch, LossWeights{}, on).total;
        g.head[i] = orig - h;
        double lm = total_loss(batch, LossWeights{}, on).total;
        g.head[i] = orig;
        double fd = (lp - lm) / (2.0 * h);
        double denom = std::max(1e-2, std::abs(fd));
        EXPECT_LT(std::abs(grads[0][i] - fd) / denom, 2e-2) << "entry " << i;
    }
}

TEST(TotalLoss, LogLineFormat) {
    LossBreakdown b;
    b.total = 1.5;
    b.bce = 0.5;
    b.ciou = 0.1;
    b.dfl = 0.25;
    b.masked_count = 7;
    b.tcls = {0.25, std::numeric_limits<double>::infinity()};
    EXPECT_EQ(format_loss_line(12, b), "12,1.5,0.5,0.1,0.25,7,0.25,inf");
}
