#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "densedet/box.hpp"
#include "densedet/catalog.hpp"
#include "densedet/config.hpp"
#include "densedet/image_io.hpp"

namespace densedet {

// Parameters for the synthetic dense-scene renderer: rows of rounded
// rectangular cells on a wooden-board background, one color family per
// class, long-tailed class frequencies.
struct SceneConfig {
    int image_size = 256;
    int num_images = 0;
    int cells_min = 22;
    int cells_max = 32;
    int cell_min_px = 18;
    int cell_max_px = 34;
    std::vector<double> class_weights = {0.5, 0.3, 0.1, 0.05, 0.03, 0.02};
    double color_noise = 0.04;
    int placement_retries = 60;  // attempts per requested cell

    int num_classes() const { return int(class_weights.size()); }

    static SceneConfig from_kv(const KvConfig& kv) {
        SceneConfig c;
        c.image_size = kv.get_int("scene.image_size", c.image_size);
        c.num_images = kv.get_int("scene.num_images", c.num_images);
        c.cells_min = kv.get_int("scene.cells_min", c.cells_min);
        c.cells_max = kv.get_int("scene.cells_max", c.cells_max);
        c.cell_min_px = kv.get_int("scene.cell_min_px", c.cell_min_px);
        c.cell_max_px = kv.get_int("scene.cell_max_px", c.cell_max_px);
        c.class_weights = kv.get_doubles("scene.class_weights", c.class_weights);
        c.color_noise = kv.get_double("scene.color_noise", c.color_noise);
        c.placement_retries = kv.get_int("scene.placement_retries", c.placement_retries);
        c.validate();
        return c;
    }

    void validate() const {
        if (num_images < 0) throw ConfigError("scene.num_images must be >= 0");
        if (image_size < 32) throw ConfigError("scene.image_size too small");
        if (cells_min < 0 || cells_max < cells_min)
            throw ConfigError("invalid cells_min/cells_max");
        if (cell_min_px < 4 || cell_max_px < cell_min_px || cell_max_px > image_size / 2)
            throw ConfigError("invalid cell size range");
        if (class_weights.empty()) throw ConfigError("scene.class_weights empty");
        double s = 0;
        for (double w : class_weights) {
            if (w <= 0) throw ConfigError("class weights must be positive");
            s += w;
        }
        if (s <= 0) throw ConfigError("class weights must sum to > 0");
    }

    uint64_t fingerprint() const {
        std::ostringstream ss;
        ss << image_size << '|' << num_images << '|' << cells_min << '|' << cells_max << '|'
           << cell_min_px << '|' << cell_max_px << '|' << color_noise << '|';
        for (double w : class_weights) ss << w << ',';
        auto s = ss.str();
        return fnv1a64(s.data(), s.size());
    }
};

// One synthetic image with its oracle labels and (possibly capped)
// visible label set.
struct SceneSample {
    ImageU8 image;
    std::vector<LabeledBox> full_gt;
    std::vector<int> visible;  // indices into full_gt
    uint64_t seed = 0;
    int index = 0;

    std::vector<LabeledBox> visible_boxes() const {
        std::vector<LabeledBox> out;
        out.reserve(visible.size());
        for (int i : visible) out.push_back(full_gt[size_t(i)]);
        return out;
    }
};

struct DatasetSplit {
    std::vector<SceneSample> train;
    std::vector<SceneSample> val;
    std::vector<SceneSample> test;
};

struct Rgb {
    float r, g, b;
};

// Distinct hue per class so low AP reflects labeling effects, not
// impossible perception.
inline Rgb class_color(int class_id, int num_classes) {
    float h = float(class_id) / float(std::max(1, num_classes));  // [0,1)
    float s = 0.72f, v = 0.82f;
    float hh = h * 6.0f;
    int i = int(hh) % 6;
    float f = hh - std::floor(hh);
    float p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

inline ClassCatalog make_default_catalog(int num_classes) {
    static const std::array<const char*, 5> status_names = {"Dead", "Food", "Hatched",
                                                            "Larva", "Prepupa"};
    static const std::string codes = "DFHLP";
    std::vector<ClassSpec> classes;
    classes.reserve(size_t(num_classes));
    for (int i = 0; i < num_classes; ++i) {
        ClassSpec c;
        c.id = i;
        int s = i % 5;
        c.status_code = codes[size_t(s)];
        c.name = "Taxon" + std::string(1, char('A' + i / 5)) + std::to_string(i % 5 + 1) +
                 " - " + status_names[size_t(s)];
        c.group = ClassGroup::minority;
        c.whitelisted = false;
        classes.push_back(std::move(c));
    }
    return ClassCatalog(std::move(classes));
}

namespace detail {

inline void draw_cell(ImageF32& img, const Box& px_box, const Rgb& base, double noise,
                      RngStream& rng) {
    int x1 = int(std::lround(px_box.x1)), y1 = int(std::lround(px_box.y1));
    int x2 = int(std::lround(px_box.x2)), y2 = int(std::lround(px_box.y2));
    float w = float(x2 - x1), h = float(y2 - y1);
    float r = 0.25f * std::min(w, h);  // corner radius
    for (int y = y1; y < y2; ++y) {
        for (int x = x1; x < x2; ++x) {
            // rounded-corner cut
            float dx = std::min(float(x) - x1, x2 - 1.0f - x);
            float dy = std::min(float(y) - y1, y2 - 1.0f - y);
            if (dx < r && dy < r) {
                float cx = r - dx, cy = r - dy;
                if (cx * cx + cy * cy > r * r) continue;
            }
            bool border = (x - x1 < 2) || (x2 - 1 - x < 2) || (y - y1 < 2) || (y2 - 1 - y < 2);
            float shade = border ? 0.55f : 1.0f;
            float n = float(rng.uniform(-noise, noise));
            img.at(y, x, 0) = clampf(base.r * shade + n, 0.0f, 1.0f);
            img.at(y, x, 1) = clampf(base.g * shade + n, 0.0f, 1.0f);
            img.at(y, x, 2) = clampf(base.b * shade + n, 0.0f, 1.0f);
        }
    }
}

}  // namespace detail

// Renders one sample. Deterministic in (config, seed, index): all
// randomness comes from RngStream(seed, index).
inline SceneSample generate_sample(const SceneConfig& cfg, uint64_t seed, int index) {
    RngStream rng(seed, uint64_t(index));
    const int S = cfg.image_size;

    ImageF32 img{S, S, {}};
    img.pixels.resize(size_t(S) * S * 3);
    // wooden board background with row grooves
    int row_h = cfg.cell_max_px + 4;
    for (int y = 0; y < S; ++y) {
        bool groove = (y % row_h) < 2;
        float shade = groove ? 0.6f : 1.0f;
        for (int x = 0; x < S; ++x) {
            float n = float(rng.uniform(-0.02, 0.02));
            img.at(y, x, 0) = clampf(0.48f * shade + n, 0.0f, 1.0f);
            img.at(y, x, 1) = clampf(0.36f * shade + n, 0.0f, 1.0f);
            img.at(y, x, 2) = clampf(0.22f * shade + n, 0.0f, 1.0f);
        }
    }

    int want = cfg.cells_min + int(rng.uniform_int(uint64_t(cfg.cells_max - cfg.cells_min + 1)));

    // normalized class weights, cumulative
    std::vector<double> cum(cfg.class_weights.size());
    double tot = 0;
    for (size_t i = 0; i < cum.size(); ++i) {
        tot += cfg.class_weights[i];
        cum[i] = tot;
    }

    std::vector<Box> placed;  // pixel coordinates
    std::vector<LabeledBox> gt;
    int attempts = cfg.placement_retries * std::max(1, want);
    while (int(placed.size()) < want && attempts-- > 0) {
        float w = float(rng.uniform(cfg.cell_min_px, cfg.cell_max_px));
        float h = float(rng.uniform(cfg.cell_min_px, cfg.cell_max_px));
        // row-aligned vertical placement with jitter
        int nrows = std::max(1, S / row_h);
        int row = int(rng.uniform_int(uint64_t(nrows)));
        float y1 = float(row * row_h + 3) + float(rng.uniform(0.0, std::max(1.0, row_h - h - 4.0)));
        float x1 = float(rng.uniform(1.0, S - w - 1.0));
        Box b{x1, y1, x1 + w, y1 + h};
        if (b.y2 >= S - 1) continue;
        bool ok = true;
        for (const Box& p : placed) {
            if (box_iou(b, p) >= 0.3f) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        placed.push_back(b);

        double u = rng.uniform() * tot;
        int cls = int(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        cls = std::min(cls, int(cum.size()) - 1);

        detail::draw_cell(img, b, class_color(cls, cfg.num_classes()), cfg.color_noise, rng);
        LabeledBox lb;
        lb.class_id = cls;
        lb.cx = b.cx() / S;
        lb.cy = b.cy() / S;
        lb.w = b.w() / S;
        lb.h = b.h() / S;
        gt.push_back(lb);
    }
    if (int(placed.size()) < want)
        throw ConfigError("cell density infeasible under IoU < 0.3 packing (placed " +
                          std::to_string(placed.size()) + " of " + std::to_string(want) + ")");

    SceneSample sample;
    sample.image = to_u8(img);
    sample.full_gt = std::move(gt);
    sample.visible.resize(sample.full_gt.size());
    for (size_t i = 0; i < sample.visible.size(); ++i) sample.visible[i] = int(i);
    sample.seed = seed;
    sample.index = index;
    return sample;
}

inline std::vector<SceneSample> generate_dataset(const SceneConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::vector<SceneSample> out;
    out.reserve(size_t(cfg.num_images));
    for (int i = 0; i < cfg.num_images; ++i) out.push_back(generate_sample(cfg, seed, i));
    return out;
}

// Dataset-wide label cap: per class keep min(cap, total) labels, chosen
// uniformly at random. Classes over the cap become majority + whitelisted;
// the rest keep all labels (minority). Oracle full_gt is never touched.
inline void apply_label_cap(std::vector<SceneSample>& train, ClassCatalog& catalog, int64_t cap,
                            uint64_t seed) {
    if (cap < 1) throw ConfigError("label cap must be >= 1");
    // all (sample, box) occurrences per class
    std::vector<std::vector<std::pair<int, int>>> occ(size_t(catalog.size()));
    for (size_t s = 0; s < train.size(); ++s)
        for (size_t b = 0; b < train[s].full_gt.size(); ++b)
            occ[size_t(train[s].full_gt[b].class_id)].push_back({int(s), int(b)});

    std::vector<std::vector<int>> keep(train.size());
    RngStream rng(seed, 0x1abe1cafULL);
    for (int c = 0; c < catalog.size(); ++c) {
        auto& items = occ[size_t(c)];
        bool over = int64_t(items.size()) > cap;
        catalog[c].group = over ? ClassGroup::majority : ClassGroup::minority;
        catalog[c].whitelisted = over;
        if (over) rng.shuffle(items);
        size_t n = over ? size_t(cap) : items.size();
        for (size_t i = 0; i < n; ++i) keep[size_t(items[i].first)].push_back(items[i].second);
    }
    for (size_t s = 0; s < train.size(); ++s) {
        std::sort(keep[s].begin(), keep[s].end());
        train[s].visible = std::move(keep[s]);
    }
}

// Shuffled split with largest-remainder rounding of the fractions.
inline DatasetSplit split_dataset(const std::vector<SceneSample>& dataset,
                                  const std::array<double, 3>& fractions, uint64_t seed) {
    double s = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    if (dataset.size() < 10) throw ConfigError("dataset too small to split (need >= 10 samples)");

    size_t n = dataset.size();
    std::array<size_t, 3> sizes;
    std::array<double, 3> rem;
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        double exact = fractions[size_t(i)] * double(n);
        sizes[size_t(i)] = size_t(std::floor(exact + 1e-12));
        rem[size_t(i)] = exact - double(sizes[size_t(i)]);
        assigned += sizes[size_t(i)];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rem[size_t(i)] > rem[size_t(best)]) best = i;
        ++sizes[size_t(best)];
        rem[size_t(best)] = -1;
        ++assigned;
    }

    std::vector<int> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = int(i);
    RngStream rng(seed, 0x5911fULL);
    rng.shuffle(idx);

    DatasetSplit split;
    size_t pos = 0;
    auto take = [&](std::vector<SceneSample>& dst, size_t count) {
        for (size_t i = 0; i < count; ++i) dst.push_back(dataset[size_t(idx[pos++])]);
    };
    take(split.train, sizes[0]);
    take(split.val, sizes[1]);
    take(split.test, sizes[2]);
    return split;
}

}  // namespace densedet
