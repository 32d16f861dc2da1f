#pragma once

#include <vector>

#include "densedet/box.hpp"
#include "densedet/config.hpp"
#include "densedet/image_io.hpp"
#include "densedet/scene.hpp"

namespace densedet {

struct AugmentConfig {
    double hflip_p = 0.5;
    double vflip_p = 0.5;
    double brightness_delta = 0.2;   // additive, drawn from [-delta, delta]
    double contrast_min = 0.8;
    double contrast_max = 1.25;

    static AugmentConfig from_kv(const KvConfig& kv) {
        AugmentConfig a;
        a.hflip_p = kv.get_double("augment.hflip_p", a.hflip_p);
        a.vflip_p = kv.get_double("augment.vflip_p", a.vflip_p);
        a.brightness_delta = kv.get_double("augment.brightness_delta", a.brightness_delta);
        a.contrast_min = kv.get_double("augment.contrast_min", a.contrast_min);
        a.contrast_max = kv.get_double("augment.contrast_max", a.contrast_max);
        if (a.hflip_p < 0 || a.hflip_p > 1 || a.vflip_p < 0 || a.vflip_p > 1)
            throw ConfigError("flip probabilities must be in [0,1]");
        return a;
    }
};

struct AugmentedSample {
    ImageF32 image;
    std::vector<LabeledBox> visible;
    std::vector<LabeledBox> full;
    bool hflip = false, vflip = false;
};

// Flips apply jointly to pixels and all boxes (visible and oracle);
// photometric changes touch pixels only. Draw order is fixed so the
// result is pure in (sample, rng state).
inline AugmentedSample augment(const SceneSample& sample, const AugmentConfig& cfg,
                               RngStream& rng) {
    AugmentedSample out;
    out.hflip = rng.uniform() < cfg.hflip_p;
    out.vflip = rng.uniform() < cfg.vflip_p;
    double brightness = rng.uniform(-cfg.brightness_delta, cfg.brightness_delta);
    double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);

    ImageF32 img = to_float(sample.image);
    int W = img.width, H = img.height;
    ImageF32 res{W, H, std::vector<float>(img.pixels.size())};
    for (int y = 0; y < H; ++y) {
        int sy = out.vflip ? H - 1 - y : y;
        for (int x = 0; x < W; ++x) {
            int sx = out.hflip ? W - 1 - x : x;
            for (int c = 0; c < 3; ++c) {
                float v = img.at(sy, sx, c);
                v = float((v - 0.5) * contrast + 0.5 + brightness);
                res.at(y, x, c) = clampf(v, 0.0f, 1.0f);
            }
        }
    }
    out.image = std::move(res);

    auto flip_box = [&](LabeledBox b) {
        if (out.hflip) b.cx = 1.0f - b.cx;
        if (out.vflip) b.cy = 1.0f - b.cy;
        return b;
    };
    for (const auto& b : sample.full_gt) out.full.push_back(flip_box(b));
    for (int i : sample.visible) out.visible.push_back(flip_box(sample.full_gt[size_t(i)]));
    return out;
}

}  // namespace densedet
