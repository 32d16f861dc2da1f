#pragma once

#include <algorithm>
#include <cmath>

namespace densedet {

// Axis-aligned box in corner form. Coordinates are normalized to [0,1]
// unless a call site says otherwise (loss kernels also use them in
// stride units; the math is unit-agnostic).
struct Box {
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    float w() const { return x2 - x1; }
    float h() const { return y2 - y1; }
    float area() const { return std::max(0.0f, w()) * std::max(0.0f, h()); }
    float cx() const { return 0.5f * (x1 + x2); }
    float cy() const { return 0.5f * (y1 + y2); }

    static Box from_cxcywh(float cx, float cy, float w, float h) {
        return {cx - 0.5f * w, cy - 0.5f * h, cx + 0.5f * w, cy + 0.5f * h};
    }
};

inline float box_intersection(const Box& a, const Box& b) {
    float iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    float ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0 || ih <= 0) return 0.0f;
    return iw * ih;
}

inline float box_iou(const Box& a, const Box& b) {
    float inter = box_intersection(a, b);
    float uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0f;
}

// Ground-truth or visible label: class id plus normalized center-form box.
struct LabeledBox {
    int class_id = 0;
    float cx = 0, cy = 0, w = 0, h = 0;

    Box corners() const { return Box::from_cxcywh(cx, cy, w, h); }
};

}  // namespace densedet
