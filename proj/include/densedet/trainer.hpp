#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "densedet/augment.hpp"
#include "densedet/cfpl.hpp"
#include "densedet/eval.hpp"
#include "densedet/loss.hpp"
#include "densedet/net.hpp"
#include "densedet/scene.hpp"

namespace densedet {

struct TrainConfig {
    int epochs = 40;  // desk scale; reference setting is 120
    int batch_size = 16;
    int image_size = 256;  // 640 available via config
    int nbins = 16;
    double lr = 3.13e-4;
    double weight_decay = 0.01;
    LossWeights weights;
    CfplConfig cfpl;
    AugmentConfig augment;
    uint64_t seed = 0;
    int num_seeds = 3;  // paired runs in a comparison
    float conf_floor = 0.05f;
    float nms_iou = 0.5f;
    float conf_threshold = 0.5f;
    float iou_match = 0.5f;

    static TrainConfig from_kv(const KvConfig& kv) {
        TrainConfig c;
        c.epochs = kv.get_int("train.epochs", c.epochs);
        c.batch_size = kv.get_int("train.batch_size", c.batch_size);
        c.image_size = kv.get_int("train.image_size", c.image_size);
        c.nbins = kv.get_int("train.nbins", c.nbins);
        c.lr = kv.get_double("train.lr", c.lr);
        c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
        c.seed = uint64_t(kv.get_i64("train.seed", int64_t(c.seed)));
        c.num_seeds = kv.get_int("train.num_seeds", c.num_seeds);
        c.conf_floor = float(kv.get_double("eval.conf_floor", c.conf_floor));
        c.nms_iou = float(kv.get_double("eval.nms_iou", c.nms_iou));
        c.conf_threshold = float(kv.get_double("eval.conf_threshold", c.conf_threshold));
        c.iou_match = float(kv.get_double("eval.iou_match", c.iou_match));
        c.weights = LossWeights::from_kv(kv);
        c.cfpl = CfplConfig::from_kv(kv);
        c.augment = AugmentConfig::from_kv(kv);
        if (c.epochs < 1 || c.batch_size < 1) throw ConfigError("epochs and batch_size must be >= 1");
        if (c.image_size % DetectorNet::kStride != 0)
            throw ConfigError("image_size must be divisible by the stride");
        return c;
    }
};

inline EvalReport evaluate_model(const DetectorNet& net, const std::vector<SceneSample>& samples,
                                 const ClassCatalog& catalog, const TrainConfig& cfg) {
    std::vector<ImageEval> images;
    images.reserve(samples.size());
    for (const auto& s : samples) {
        Tensor input = DetectorNet::image_to_input(to_float(s.image));
        PredictionGrid grid = net.forward(input);
        ImageEval ie;
        ie.dets = nms(extract_detections(grid, cfg.conf_floor), cfg.nms_iou);
        ie.gt = s.full_gt;  // evaluation is always against the oracle
        images.push_back(std::move(ie));
    }
    return evaluate(images, catalog, cfg.conf_threshold, cfg.iou_match);
}

struct TrainResult {
    DetectorNet final_net;
    DetectorNet best_net;
    double best_val_map = 0;
    int best_epoch = -1;
    std::string log;  // metrics log, one CSV line per step / val epoch
};

// Deterministic training loop: per batch augment -> forward -> assign ->
// mask -> loss -> step, with a val evaluation per epoch. Fully
// reproducible in (data, config, seed).
inline TrainResult train(const std::vector<SceneSample>& train_samples,
                         const std::vector<SceneSample>& val_samples,
                         const ClassCatalog& catalog, const TrainConfig& cfg) {
    if (train_samples.empty()) throw ConfigError("train split is empty");
    int nc = catalog.size();
    GridGeometry geom{cfg.image_size, DetectorNet::kStride};

    TrainResult res;
    res.final_net = DetectorNet(nc, cfg.nbins, cfg.seed);
    DetectorNet& net = res.final_net;
    AdamW opt(cfg.lr, cfg.weight_decay);
    auto params = net.params();

    std::ostringstream log;
    log << "kind,step,L_total,L_bce,L_ciou,L_dfl,masked_count";
    for (int c = 0; c < nc; ++c) log << ",T_" << c;
    log << '\n';

    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(train_samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        RngStream shuffle_rng(cfg.seed, 0x0defULL + uint64_t(epoch));
        shuffle_rng.shuffle(order);

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            size_t n = end - start;

            std::vector<Activations> acts(n);
            std::vector<PredictionGrid> grids(n);
            std::vector<TargetAssignment> assigns(n);
            std::vector<CfplInput> items(n);
            for (size_t k = 0; k < n; ++k) {
                int idx = order[start + k];
                RngStream aug_rng(cfg.seed,
                                  0xa06ULL + (uint64_t(epoch) << 24) + uint64_t(idx));
                AugmentedSample aug = augment(train_samples[size_t(idx)], cfg.augment, aug_rng);
                Tensor input = DetectorNet::image_to_input(aug.image);
                grids[k] = net.forward(input, &acts[k]);
                // visible labels only; the oracle never reaches the loss
                assigns[k] = assign_targets(aug.visible, geom, nc, cfg.nbins);
                items[k] = {&grids[k], &assigns[k]};
            }

            std::vector<Tensor> d_heads;
            LossBreakdown b = total_loss(items, cfg.weights, cfg.cfpl, &d_heads);
            if (!std::isfinite(b.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at step " << step << "; batch indices:";
                for (size_t k = 0; k < n; ++k) msg << ' ' << order[start + k];
                throw RuntimeError(msg.str());
            }

            net.zero_grad();
            for (size_t k = 0; k < n; ++k) net.backward(acts[k], d_heads[k]);
            opt.step(params);

            log << "step," << format_loss_line(step, b) << '\n';
            ++step;
        }

        if (!val_samples.empty()) {
            EvalReport val = evaluate_model(net, val_samples, catalog, cfg);
            log << "val," << epoch << ',' << format_double(val.map) << '\n';
            if (res.best_epoch < 0 || val.map > res.best_val_map) {
                res.best_val_map = val.map;
                res.best_epoch = epoch;
                res.best_net = net;
            }
        }
    }
    if (res.best_epoch < 0) res.best_net = net;
    res.log = log.str();
    return res;
}

// ---------------------------------------------------------------------------
// Paired comparison: N seeds, per seed one baseline run and one masked
// run from identical data and seed.

struct RunArtifacts {
    bool cfpl_enabled = false;
    uint64_t seed = 0;
    TrainResult result;
    EvalReport report;  // on the test split, best-val checkpoint
};

struct AggStat {
    double mean = 0, stddev = 0;
    int n = 0;
};

inline AggStat aggregate(const std::vector<double>& xs) {
    AggStat s;
    s.n = int(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= double(xs.size());
    if (xs.size() > 1) {
        double ss = 0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / double(xs.size() - 1));  // sample std
    }
    return s;
}

struct ComparisonResult {
    std::vector<RunArtifacts> runs;  // baseline/cfpl interleaved per seed

    std::vector<const RunArtifacts*> side(bool cfpl) const {
        std::vector<const RunArtifacts*> out;
        for (const auto& r : runs)
            if (r.cfpl_enabled == cfpl) out.push_back(&r);
        return out;
    }

    // metric extracted per run, aggregated over seeds
    template <class F>
    AggStat agg(bool cfpl, F&& metric) const {
        std::vector<double> xs;
        for (const auto* r : side(cfpl)) xs.push_back(metric(*r));
        return aggregate(xs);
    }
};

inline ComparisonResult run_comparison(const std::vector<SceneSample>& train_samples,
                                       const std::vector<SceneSample>& val_samples,
                                       const std::vector<SceneSample>& test_samples,
                                       const ClassCatalog& catalog, const TrainConfig& base) {
    ComparisonResult out;
    for (int k = 0; k < base.num_seeds; ++k) {
        for (bool use_cfpl : {false, true}) {
            TrainConfig cfg = base;
            cfg.seed = base.seed + uint64_t(k);
            cfg.cfpl.enabled = use_cfpl;
            if (use_cfpl && cfg.cfpl.whitelist.empty())
                for (int c : catalog.whitelist()) cfg.cfpl.whitelist.insert(c);
            RunArtifacts run;
            run.cfpl_enabled = use_cfpl;
            run.seed = cfg.seed;
            run.result = train(train_samples, val_samples, catalog, cfg);
            run.report = evaluate_model(run.result.best_net, test_samples, catalog, cfg);
            out.runs.push_back(std::move(run));
        }
    }
    return out;
}

}  // namespace densedet
