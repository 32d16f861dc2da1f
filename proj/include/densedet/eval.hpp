#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "densedet/box.hpp"
#include "densedet/catalog.hpp"
#include "densedet/loss.hpp"
#include "densedet/net.hpp"

namespace densedet {

struct Detection {
    Box box;
    int class_id = 0;
    float confidence = 0;
};

// Every (cell, class) whose sigmoid score clears the floor becomes a
// candidate detection with the cell's decoded box.
inline std::vector<Detection> extract_detections(const PredictionGrid& grid,
                                                 float conf_floor = 0.05f) {
    std::vector<Detection> out;
    std::vector<Box> boxes = decode_boxes(grid);
    int G = grid.G;
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j)
            for (int c = 0; c < grid.nc; ++c) {
                float conf = grid.sigmoid_cls(i, j, c);
                if (conf >= conf_floor)
                    out.push_back({boxes[size_t(i) * G + j], c, conf});
            }
    return out;
}

inline bool detection_order(const Detection& a, const Detection& b) {
    // descending confidence, deterministic tie-break
    return std::tie(b.confidence, a.class_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
           std::tie(a.confidence, b.class_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
}

// Greedy class-wise suppression.
inline std::vector<Detection> nms(std::vector<Detection> dets, float iou_threshold) {
    std::sort(dets.begin(), dets.end(), detection_order);
    std::vector<Detection> kept;
    std::vector<bool> dead(dets.size(), false);
    for (size_t i = 0; i < dets.size(); ++i) {
        if (dead[i]) continue;
        kept.push_back(dets[i]);
        for (size_t j = i + 1; j < dets.size(); ++j) {
            if (dead[j] || dets[j].class_id != dets[i].class_id) continue;
            if (box_iou(dets[i].box, dets[j].box) > iou_threshold) dead[j] = true;
        }
    }
    return kept;
}

// Detections plus oracle ground truth of one image.
struct ImageEval {
    std::vector<Detection> dets;  // already NMS-filtered
    std::vector<LabeledBox> gt;
};

struct PrPoint {
    double recall = 0, precision = 0, confidence = 0;
};

struct ApResult {
    bool defined = false;
    double ap = 0;
    std::vector<PrPoint> curve;
};

// Area under the confidence-swept PR curve at one IoU threshold, with
// all-points interpolation (precision envelope). Greedy matching by
// descending confidence against unmatched GT of the same class.
inline ApResult average_precision(const std::vector<ImageEval>& images, int class_id,
                                  float iou_match = 0.5f) {
    int n_gt = 0;
    for (const auto& img : images)
        for (const auto& g : img.gt)
            if (g.class_id == class_id) ++n_gt;
    ApResult res;
    if (n_gt == 0) return res;  // AP undefined
    res.defined = true;

    struct Cand {
        int img;
        Detection det;
    };
    std::vector<Cand> cands;
    for (size_t n = 0; n < images.size(); ++n)
        for (const auto& d : images[n].dets)
            if (d.class_id == class_id) cands.push_back({int(n), d});
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& b) { return detection_order(a.det, b.det); });

    std::vector<std::vector<bool>> matched(images.size());
    for (size_t n = 0; n < images.size(); ++n) matched[n].assign(images[n].gt.size(), false);

    int tp = 0, fp = 0;
    for (const auto& c : cands) {
        const auto& gt = images[size_t(c.img)].gt;
        int best = -1;
        float best_iou = 0;
        for (size_t g = 0; g < gt.size(); ++g) {
            if (gt[g].class_id != class_id || matched[size_t(c.img)][g]) continue;
            float iou = box_iou(c.det.box, gt[g].corners());
            if (iou >= iou_match && iou > best_iou) {
                best_iou = iou;
                best = int(g);
            }
        }
        if (best >= 0) {
            matched[size_t(c.img)][size_t(best)] = true;
            ++tp;
        } else {
            ++fp;
        }
        res.curve.push_back({double(tp) / n_gt, double(tp) / double(tp + fp),
                             double(c.det.confidence)});
    }

    // precision envelope, integrated over recall steps
    double ap = 0, pmax = 0, r_next = res.curve.empty() ? 0.0 : res.curve.back().recall;
    double prev_r = r_next;
    for (auto it = res.curve.rbegin(); it != res.curve.rend(); ++it) {
        pmax = std::max(pmax, it->precision);
        auto next = std::next(it);
        double r_lo = (next == res.curve.rend()) ? 0.0 : next->recall;
        ap += (prev_r - r_lo) * pmax;
        prev_r = r_lo;
    }
    res.ap = ap;
    return res;
}

// Same-class greedy matching at a fixed confidence threshold.
inline double recall_at_confidence(const std::vector<ImageEval>& images, int class_id,
                                   float conf_threshold = 0.5f, float iou_match = 0.5f) {
    int n_gt = 0, tp = 0;
    for (const auto& img : images) {
        std::vector<bool> matched(img.gt.size(), false);
        std::vector<Detection> dets;
        for (const auto& d : img.dets)
            if (d.class_id == class_id && d.confidence >= conf_threshold) dets.push_back(d);
        std::sort(dets.begin(), dets.end(), detection_order);
        for (const auto& g : img.gt)
            if (g.class_id == class_id) ++n_gt;
        for (const auto& d : dets) {
            int best = -1;
            float best_iou = 0;
            for (size_t g = 0; g < img.gt.size(); ++g) {
                if (img.gt[g].class_id != class_id || matched[g]) continue;
                float iou = box_iou(d.box, img.gt[g].corners());
                if (iou >= iou_match && iou > best_iou) {
                    best_iou = iou;
                    best = int(g);
                }
            }
            if (best >= 0) {
                matched[size_t(best)] = true;
                ++tp;
            }
        }
    }
    return n_gt > 0 ? double(tp) / n_gt : 0.0;
}

// (N_c+1)x(N_c+1) with background at index N_c. One-to-one matching,
// greedy by IoU, class-agnostic; unmatched GT go to the background
// column, unmatched detections to the background row.
inline std::vector<std::vector<int64_t>> confusion_matrix(const std::vector<ImageEval>& images,
                                                          int num_classes,
                                                          float conf_threshold = 0.5f,
                                                          float iou_match = 0.5f) {
    std::vector<std::vector<int64_t>> m(size_t(num_classes + 1),
                                        std::vector<int64_t>(size_t(num_classes + 1), 0));
    for (const auto& img : images) {
        std::vector<Detection> dets;
        for (const auto& d : img.dets)
            if (d.confidence >= conf_threshold) dets.push_back(d);
        std::sort(dets.begin(), dets.end(), detection_order);

        struct Pair {
            float iou;
            int g, d;
        };
        std::vector<Pair> pairs;
        for (size_t g = 0; g < img.gt.size(); ++g)
            for (size_t d = 0; d < dets.size(); ++d) {
                float iou = box_iou(img.gt[g].corners(), dets[d].box);
                if (iou >= iou_match) pairs.push_back({iou, int(g), int(d)});
            }
        std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
            return std::tie(b.iou, a.g, a.d) < std::tie(a.iou, b.g, b.d);
        });

        std::vector<bool> g_used(img.gt.size(), false), d_used(dets.size(), false);
        for (const auto& p : pairs) {
            if (g_used[size_t(p.g)] || d_used[size_t(p.d)]) continue;
            g_used[size_t(p.g)] = true;
            d_used[size_t(p.d)] = true;
            ++m[size_t(img.gt[size_t(p.g)].class_id)][size_t(dets[size_t(p.d)].class_id)];
        }
        for (size_t g = 0; g < img.gt.size(); ++g)
            if (!g_used[g]) ++m[size_t(img.gt[g].class_id)][size_t(num_classes)];
        for (size_t d = 0; d < dets.size(); ++d)
            if (!d_used[d]) ++m[size_t(num_classes)][size_t(dets[d].class_id)];
    }
    return m;
}

struct ClassMetrics {
    bool ap_defined = false;
    double ap = 0;
    double recall50 = 0;
    double bg_rate = 0;  // fraction of GT instances lost to background
    int gt_count = 0;
    std::vector<PrPoint> curve;
};

struct GroupMetrics {
    bool defined = false;
    double mean_ap = 0, mean_recall = 0, mean_bg_rate = 0;
    int num_classes = 0;
};

struct EvalReport {
    std::vector<ClassMetrics> per_class;
    std::vector<std::vector<int64_t>> confusion;
    GroupMetrics majority, minority;
    double map = 0;  // mean over classes with defined AP
};

inline GroupMetrics group_aggregate(const EvalReport& report, const ClassCatalog& catalog,
                                    ClassGroup group) {
    GroupMetrics g;
    double ap = 0, rec = 0, bg = 0;
    for (int c : catalog.group_ids(group)) {
        const auto& m = report.per_class[size_t(c)];
        if (!m.ap_defined) continue;
        ap += m.ap;
        rec += m.recall50;
        bg += m.bg_rate;
        ++g.num_classes;
    }
    if (g.num_classes > 0) {
        g.defined = true;
        g.mean_ap = ap / g.num_classes;
        g.mean_recall = rec / g.num_classes;
        g.mean_bg_rate = bg / g.num_classes;
    }
    return g;
}

inline EvalReport evaluate(const std::vector<ImageEval>& images, const ClassCatalog& catalog,
                           float conf_threshold = 0.5f, float iou_match = 0.5f) {
    EvalReport r;
    int nc = catalog.size();
    r.confusion = confusion_matrix(images, nc, conf_threshold, iou_match);
    double ap_sum = 0;
    int ap_n = 0;
    for (int c = 0; c < nc; ++c) {
        ClassMetrics m;
        ApResult ap = average_precision(images, c, iou_match);
        m.ap_defined = ap.defined;
        m.ap = ap.ap;
        m.curve = std::move(ap.curve);
        m.recall50 = recall_at_confidence(images, c, conf_threshold, iou_match);
        int64_t row = 0;
        for (int64_t v : r.confusion[size_t(c)]) row += v;
        m.gt_count = int(row);
        m.bg_rate = row > 0 ? double(r.confusion[size_t(c)][size_t(nc)]) / double(row) : 0.0;
        if (ap.defined) {
            ap_sum += ap.ap;
            ++ap_n;
        }
        r.per_class.push_back(std::move(m));
    }
    r.map = ap_n > 0 ? ap_sum / ap_n : 0.0;
    r.majority = group_aggregate(r, catalog, ClassGroup::majority);
    r.minority = group_aggregate(r, catalog, ClassGroup::minority);
    return r;
}

}  // namespace densedet
