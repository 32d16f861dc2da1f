#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "densedet/assign.hpp"
#include "densedet/config.hpp"
#include "densedet/net.hpp"

namespace densedet {

// Configuration of the dynamic false-positive masking applied to the
// classification loss: confident predictions of whitelisted classes that
// fall outside those classes' ground-truth areas are dropped from the
// loss, using per-class score thresholds recomputed every iteration from
// the ground-truth-area predictions.
struct CfplConfig {
    bool enabled = false;
    std::set<int> whitelist;
    bool whitelist_auto = false;  // take the capped classes from the catalog
    double threshold_quantile = 0.0;  // 0 = minimum of gt-area scores

    static CfplConfig from_kv(const KvConfig& kv) {
        CfplConfig c;
        c.enabled = kv.get_bool("cfpl.enabled", c.enabled);
        c.threshold_quantile = kv.get_double("cfpl.threshold_quantile", c.threshold_quantile);
        if (kv.get_str("cfpl.whitelist", "") == "auto")
            c.whitelist_auto = true;
        else
            for (double v : kv.get_doubles("cfpl.whitelist", {})) c.whitelist.insert(int(v));
        if (c.threshold_quantile < 0 || c.threshold_quantile > 1)
            throw ConfigError("cfpl.threshold_quantile must be in [0,1]");
        return c;
    }
};

// Binary mask over every (cell, class) score entry of a batch, plus the
// per-class sigmoid-space thresholds that produced it. +inf threshold
// means the class was not thresholded this step.
struct CfplMask {
    std::vector<std::vector<uint8_t>> m;  // per image, G*G*nc
    std::vector<double> tcls;             // sigmoid space
    int64_t masked_count = 0;

    bool at(int img, int i, int j, int c, int G, int nc) const {
        return m[size_t(img)][(size_t(i) * G + j) * nc + c] != 0;
    }
};

// One image's view for mask computation: class scores plus its gt-area flags.
struct CfplInput {
    const PredictionGrid* grid;
    const TargetAssignment* assign;
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return std::numeric_limits<double>::infinity();
    if (sorted.size() == 1) return sorted[0];
    double pos = q * double(sorted.size() - 1);
    size_t lo = size_t(std::floor(pos));
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - double(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Thresholds are batch statistics treated as constants by the gradient:
// per whitelisted class with at least one gt-area entry this batch,
// T = quantile(q) of the sigmoid scores over those entries. An entry is
// masked out iff it is outside the class's gt area and its sigmoid score
// strictly exceeds T. Everything else, and every non-whitelisted class,
// keeps mask 1.
inline CfplMask compute_cfpl_mask(const std::vector<CfplInput>& batch, const CfplConfig& cfg) {
    CfplMask out;
    out.m.resize(batch.size());
    int nc = batch.empty() ? 0 : batch[0].grid->nc;
    out.tcls.assign(size_t(nc), std::numeric_limits<double>::infinity());
    for (size_t n = 0; n < batch.size(); ++n) {
        int G = batch[n].grid->G;
        out.m[n].assign(size_t(G) * G * nc, 1);
    }
    if (!cfg.enabled || cfg.whitelist.empty()) return out;

    for (int c : cfg.whitelist) {
        if (c < 0 || c >= nc) throw ConfigError("whitelist class id out of range");
        std::vector<double> gt_scores;
        for (const auto& item : batch) {
            int G = item.grid->G;
            for (int i = 0; i < G; ++i)
                for (int j = 0; j < G; ++j)
                    if (item.assign->in_gt_area(i, j, c))
                        gt_scores.push_back(item.grid->sigmoid_cls(i, j, c));
        }
        if (gt_scores.empty()) continue;  // no evidence: no masking this step
        std::sort(gt_scores.begin(), gt_scores.end());
        double t = quantile_sorted(gt_scores, cfg.threshold_quantile);
        out.tcls[size_t(c)] = t;

        for (size_t n = 0; n < batch.size(); ++n) {
            int G = batch[n].grid->G;
            for (int i = 0; i < G; ++i) {
                for (int j = 0; j < G; ++j) {
                    if (batch[n].assign->in_gt_area(i, j, c)) continue;
                    if (batch[n].grid->sigmoid_cls(i, j, c) > t) {
                        out.m[n][(size_t(i) * G + j) * nc + c] = 0;
                        ++out.masked_count;
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace densedet
