#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "densedet/assign.hpp"
#include "densedet/box.hpp"
#include "densedet/cfpl.hpp"
#include "densedet/dual.hpp"
#include "densedet/net.hpp"

namespace densedet {

struct LossWeights {
    double ciou = 7.5;
    double dfl = 1.5;
    double bce = 0.5;

    static LossWeights from_kv(const KvConfig& kv) {
        LossWeights w;
        w.ciou = kv.get_double("loss.ciou_weight", w.ciou);
        w.dfl = kv.get_double("loss.dfl_weight", w.dfl);
        w.bce = kv.get_double("loss.bce_weight", w.bce);
        if (w.ciou < 0 || w.dfl < 0 || w.bce < 0) throw ConfigError("loss weights must be >= 0");
        return w;
    }
};

// ---------------------------------------------------------------------------
// Binary cross-entropy, logit space. Stable for |logit| up to ~50.

inline double bce_term(double logit, double target) {
    // max(s,0) - s*y + log(1 + exp(-|s|))
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

inline double sigmoidd(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Masked, normalized by the positive-cell count (floor 1). grad, when
// given, receives d(loss)/d(logit) per entry.
inline double bce_loss(const std::vector<float>& logits, const std::vector<float>& targets,
                       const std::vector<float>& mask, int num_positive,
                       std::vector<float>* grad = nullptr) {
    double norm = double(std::max(1, num_positive));
    if (grad) grad->assign(logits.size(), 0.0f);
    double sum = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        if (mask[i] == 0.0f) continue;
        sum += mask[i] * bce_term(logits[i], targets[i]);
        if (grad)
            (*grad)[i] = float(mask[i] * (sigmoidd(logits[i]) - targets[i]) / norm);
    }
    return sum / norm;
}

// ---------------------------------------------------------------------------
// Complete-IoU between one predicted and one target box (corner form):
// 1 - IoU + rho^2/c^2 + alpha*v. Differentiated through the predicted
// corners with forward-mode duals, alpha included.

struct CiouResult {
    double loss = 0;
    std::array<double, 4> dpred{0, 0, 0, 0};  // d/d{x1,y1,x2,y2}
};

inline CiouResult ciou_pair(const Box& pred, const Box& target) {
    constexpr double eps = 1e-10;
    Dual4 px1 = Dual4::var(pred.x1, 0), py1 = Dual4::var(pred.y1, 1);
    Dual4 px2 = Dual4::var(pred.x2, 2), py2 = Dual4::var(pred.y2, 3);
    double tx1 = target.x1, ty1 = target.y1, tx2 = target.x2, ty2 = target.y2;
    double tw = tx2 - tx1, th = ty2 - ty1;
    if (tw <= 0 || th <= 0) throw RuntimeError("degenerate target box in ciou");

    Dual4 pw = px2 - px1, ph = py2 - py1;
    Dual4 iw = dmin(px2, Dual4(tx2)) - dmax(px1, Dual4(tx1));
    Dual4 ih = dmin(py2, Dual4(ty2)) - dmax(py1, Dual4(ty1));
    Dual4 inter = dmax(iw, Dual4(0.0)) * dmax(ih, Dual4(0.0));
    Dual4 uni = pw * ph + Dual4(tw * th) - inter + Dual4(eps);
    Dual4 iou = inter / uni;

    Dual4 pcx = (px1 + px2) * Dual4(0.5), pcy = (py1 + py2) * Dual4(0.5);
    double tcx = 0.5 * (tx1 + tx2), tcy = 0.5 * (ty1 + ty2);
    Dual4 rho2 = (pcx - Dual4(tcx)) * (pcx - Dual4(tcx)) +
                 (pcy - Dual4(tcy)) * (pcy - Dual4(tcy));
    Dual4 cw = dmax(px2, Dual4(tx2)) - dmin(px1, Dual4(tx1));
    Dual4 ch = dmax(py2, Dual4(ty2)) - dmin(py1, Dual4(ty1));
    Dual4 c2 = cw * cw + ch * ch + Dual4(eps);

    Dual4 dang = datan(Dual4(tw / th)) - datan(pw / ph);
    Dual4 v = Dual4(4.0 / (M_PI * M_PI)) * dang * dang;
    Dual4 alpha = v / (Dual4(1.0) - iou + v + Dual4(eps));
    Dual4 loss = Dual4(1.0) - iou + rho2 / c2 + alpha * v;

    CiouResult r;
    r.loss = loss.v;
    r.dpred = loss.g;
    return r;
}

// Mean over positive entries; no positives -> 0.
inline double ciou_loss(const std::vector<Box>& pred, const std::vector<Box>& target,
                        const std::vector<uint8_t>& fg) {
    double sum = 0;
    int n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!fg[i]) continue;
        sum += ciou_pair(pred[i], target[i]).loss;
        ++n;
    }
    return n > 0 ? sum / n : 0.0;
}

// ---------------------------------------------------------------------------
// Distribution focal loss over B bins for one side with continuous target
// d in [0, B-1]: -(r-d) log p_l - (d-l) log p_r, l = floor(d), r = l+1.
// Integer targets use p_d alone. grad accumulates scale * d/d(logits).

inline double softmax_expectation(const float* logits, int nbins, double* probs) {
    double mx = logits[0];
    for (int b = 1; b < nbins; ++b) mx = std::max(mx, double(logits[b]));
    double sum = 0;
    for (int b = 0; b < nbins; ++b) {
        probs[b] = std::exp(double(logits[b]) - mx);
        sum += probs[b];
    }
    double e = 0;
    for (int b = 0; b < nbins; ++b) {
        probs[b] /= sum;
        e += b * probs[b];
    }
    return e;
}

inline double dfl_term(const float* logits, int nbins, float d, float* grad = nullptr,
                       double scale = 1.0) {
    std::vector<double> p(static_cast<size_t>(nbins));
    softmax_expectation(logits, nbins, p.data());
    int l = int(std::floor(d));
    if (l >= nbins - 1) l = nbins - 2;  // d == B-1 handled by wr = 1
    double wl = (l + 1) - d, wr = d - l;
    double loss = 0;
    if (wl > 0) loss -= wl * std::log(std::max(p[size_t(l)], 1e-300));
    if (wr > 0) loss -= wr * std::log(std::max(p[size_t(l + 1)], 1e-300));
    if (grad) {
        for (int b = 0; b < nbins; ++b) {
            double y = (b == l ? wl : 0.0) + (b == l + 1 ? wr : 0.0);
            grad[b] += float(scale * (p[size_t(b)] - y));
        }
    }
    return loss;
}

// dist_logits: n_sides * nbins, row per side; mean over sides. Targets
// outside [0, B-1] are clamped and counted.
inline double dfl_loss(const std::vector<float>& dist_logits, const std::vector<float>& targets,
                       int nbins, int64_t* clamp_count = nullptr,
                       std::vector<float>* grad = nullptr) {
    size_t n = targets.size();
    if (n == 0) return 0.0;
    if (grad) grad->assign(dist_logits.size(), 0.0f);
    double sum = 0;
    for (size_t i = 0; i < n; ++i) {
        float d = targets[i];
        if (d < 0 || d > float(nbins - 1)) {
            if (clamp_count) ++(*clamp_count);
            d = clampf(d, 0.0f, float(nbins - 1));
        }
        sum += dfl_term(dist_logits.data() + i * size_t(nbins), nbins, d,
                        grad ? grad->data() + i * size_t(nbins) : nullptr, 1.0 / double(n));
    }
    return sum / double(n);
}

// ---------------------------------------------------------------------------
// Box decoding: each side distance is the expectation of the softmax over
// its bins (stride units), converted to normalized corners around the
// cell center and clamped to image bounds.

inline std::vector<Box> decode_boxes(const PredictionGrid& grid) {
    int G = grid.G, B = grid.nbins;
    std::vector<Box> out(size_t(G) * G);
    std::vector<double> probs(static_cast<size_t>(B));
    std::vector<float> logits(static_cast<size_t>(B));
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            double e[4];
            for (int s = 0; s < 4; ++s) {
                for (int b = 0; b < B; ++b) logits[size_t(b)] = grid.box(i, j, s, b);
                e[s] = softmax_expectation(logits.data(), B, probs.data());
            }
            float cx = (float(j) + 0.5f) / float(G);
            float cy = (float(i) + 0.5f) / float(G);
            Box b;
            b.x1 = clampf(cx - float(e[0]) / float(G), 0.0f, 1.0f);
            b.y1 = clampf(cy - float(e[1]) / float(G), 0.0f, 1.0f);
            b.x2 = clampf(cx + float(e[2]) / float(G), 0.0f, 1.0f);
            b.y2 = clampf(cy + float(e[3]) / float(G), 0.0f, 1.0f);
            out[size_t(i) * G + j] = b;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composite loss over one batch. d_heads, when given, receives per-image
// gradients w.r.t. the head tensor (same layout), lambda-scaled.

struct LossBreakdown {
    double total = 0, bce = 0, ciou = 0, dfl = 0;
    int64_t masked_count = 0;
    std::vector<double> tcls;
    int64_t clamp_count = 0;
    int64_t num_positive = 0;
};

inline LossBreakdown total_loss(const std::vector<CfplInput>& batch, const LossWeights& w,
                                const CfplConfig& cfg, std::vector<Tensor>* d_heads = nullptr) {
    LossBreakdown out;
    if (batch.empty()) return out;
    int nc = batch[0].grid->nc, B = batch[0].grid->nbins;
    out.tcls.assign(size_t(nc), std::numeric_limits<double>::infinity());

    CfplMask mask = compute_cfpl_mask(batch, cfg);
    out.tcls = mask.tcls;
    out.masked_count = mask.masked_count;

    int64_t npos = 0;
    for (const auto& item : batch) npos += item.assign->num_positive;
    out.num_positive = npos;
    double bce_norm = double(std::max<int64_t>(1, npos));
    double reg_norm = double(std::max<int64_t>(1, npos));
    double dfl_norm = double(std::max<int64_t>(1, npos * 4));

    if (d_heads) {
        d_heads->clear();
        for (const auto& item : batch) d_heads->emplace_back(item.grid->head.shape());
    }

    double bce_sum = 0, ciou_sum = 0, dfl_sum = 0;
    std::vector<double> probs(static_cast<size_t>(B));
    std::vector<float> logits(static_cast<size_t>(B));

    for (size_t n = 0; n < batch.size(); ++n) {
        const PredictionGrid& grid = *batch[n].grid;
        const TargetAssignment& as = *batch[n].assign;
        int G = grid.G;
        Tensor* dh = d_heads ? &(*d_heads)[n] : nullptr;

        for (int i = 0; i < G; ++i) {
            for (int j = 0; j < G; ++j) {
                bool fg = as.is_fg(i, j);
                int tc = fg ? as.cls(i, j) : -1;

                // classification
                for (int c = 0; c < nc; ++c) {
                    if (!mask.at(int(n), i, j, c, G, nc)) continue;
                    double y = (c == tc) ? 1.0 : 0.0;
                    double s = grid.cls(i, j, c);
                    bce_sum += bce_term(s, y);
                    if (dh) dh->at(c, i, j) += float(w.bce * (sigmoidd(s) - y) / bce_norm);
                }
                if (!fg) continue;

                // decode predicted sides (expectation per side)
                double e[4];
                std::array<std::vector<double>, 4> side_probs;
                for (int s = 0; s < 4; ++s) {
                    for (int b = 0; b < B; ++b) logits[size_t(b)] = grid.box(i, j, s, b);
                    side_probs[size_t(s)].resize(static_cast<size_t>(B));
                    e[s] = softmax_expectation(logits.data(), B, side_probs[size_t(s)].data());
                }
                float cx = (float(j) + 0.5f) / float(G);
                float cy = (float(i) + 0.5f) / float(G);
                Box pred{cx - float(e[0]) / G, cy - float(e[1]) / G, cx + float(e[2]) / G,
                         cy + float(e[3]) / G};
                Box tgt{cx - as.side(i, j, 0) / G, cy - as.side(i, j, 1) / G,
                        cx + as.side(i, j, 2) / G, cy + as.side(i, j, 3) / G};

                CiouResult cr = ciou_pair(pred, tgt);
                ciou_sum += cr.loss;
                if (dh) {
                    // chain: corners -> side expectations -> bin logits
                    double de[4] = {-cr.dpred[0] / G, -cr.dpred[1] / G, cr.dpred[2] / G,
                                    cr.dpred[3] / G};
                    for (int s = 0; s < 4; ++s) {
                        double scale = w.ciou * de[s] / reg_norm;
                        for (int b = 0; b < B; ++b)
                            dh->at(nc + s * B + b, i, j) +=
                                float(scale * side_probs[size_t(s)][size_t(b)] * (b - e[s]));
                    }
                }

                // distribution loss per side
                for (int s = 0; s < 4; ++s) {
                    for (int b = 0; b < B; ++b) logits[size_t(b)] = grid.box(i, j, s, b);
                    float d = as.side(i, j, s);
                    std::vector<float> g(size_t(B), 0.0f);
                    dfl_sum += dfl_term(logits.data(), B, d, dh ? g.data() : nullptr,
                                        w.dfl / dfl_norm);
                    if (dh)
                        for (int b = 0; b < B; ++b) dh->at(nc + s * B + b, i, j) += g[size_t(b)];
                }
            }
        }
    }

    out.bce = bce_sum / bce_norm;
    out.ciou = npos > 0 ? ciou_sum / reg_norm : 0.0;
    out.dfl = npos > 0 ? dfl_sum / dfl_norm : 0.0;
    out.total = w.ciou * out.ciou + w.dfl * out.dfl + w.bce * out.bce;
    return out;
}

inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// One logging line per step: step, totals, masked count, thresholds.
inline std::string format_loss_line(int64_t step, const LossBreakdown& b) {
    std::ostringstream ss;
    ss << step << ',' << format_double(b.total) << ',' << format_double(b.bce) << ','
       << format_double(b.ciou) << ',' << format_double(b.dfl) << ',' << b.masked_count;
    for (double t : b.tcls) ss << ',' << format_double(t);
    return ss.str();
}

}  // namespace densedet
