#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "densedet/catalog.hpp"
#include "densedet/image_io.hpp"
#include "densedet/scene.hpp"

namespace densedet {

namespace fs = std::filesystem;

// On-disk layout of one split directory:
//   images/img_000000.png
//   labels/img_000000.txt        visible labels, "<class_id> <cx> <cy> <w> <h>"
//   labels/img_000000.txt.full   oracle labels, same format, never read by the trainer
// The dataset root holds catalog.txt plus one subdirectory per split.

inline std::string sample_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06d", index);
    return buf;
}

inline void write_label_file(const std::string& path, const std::vector<LabeledBox>& boxes) {
    std::ofstream f(path);
    if (!f) throw RuntimeError("cannot write labels: " + path);
    char line[128];
    for (const auto& b : boxes) {
        std::snprintf(line, sizeof(line), "%d %.6f %.6f %.6f %.6f\n", b.class_id, b.cx, b.cy,
                      b.w, b.h);
        f << line;
    }
}

inline std::vector<LabeledBox> read_label_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw RuntimeError("cannot read labels: " + path);
    std::vector<LabeledBox> boxes;
    LabeledBox b;
    while (f >> b.class_id >> b.cx >> b.cy >> b.w >> b.h) boxes.push_back(b);
    return boxes;
}

inline void write_split_dir(const std::string& dir, const std::vector<SceneSample>& samples) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");
    for (size_t i = 0; i < samples.size(); ++i) {
        std::string stem = sample_stem(int(i));
        write_png((fs::path(dir) / "images" / (stem + ".png")).string(), samples[i].image);
        write_label_file((fs::path(dir) / "labels" / (stem + ".txt")).string(),
                         samples[i].visible_boxes());
        write_label_file((fs::path(dir) / "labels" / (stem + ".txt.full")).string(),
                         samples[i].full_gt);
    }
}

inline std::vector<SceneSample> read_split_dir(const std::string& dir) {
    fs::path images = fs::path(dir) / "images";
    if (!fs::is_directory(images)) throw RuntimeError("missing images directory: " + images.string());
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(images))
        if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());

    std::vector<SceneSample> out;
    out.reserve(stems.size());
    for (size_t i = 0; i < stems.size(); ++i) {
        SceneSample s;
        s.index = int(i);
        s.image = read_png((images / (stems[i] + ".png")).string());
        s.full_gt = read_label_file((fs::path(dir) / "labels" / (stems[i] + ".txt.full")).string());
        auto vis = read_label_file((fs::path(dir) / "labels" / (stems[i] + ".txt")).string());
        // map visible lines back onto oracle indices (labels are exact copies)
        std::vector<bool> used(s.full_gt.size(), false);
        for (const auto& v : vis) {
            bool found = false;
            for (size_t j = 0; j < s.full_gt.size(); ++j) {
                const auto& g = s.full_gt[j];
                if (!used[j] && g.class_id == v.class_id && g.cx == v.cx && g.cy == v.cy &&
                    g.w == v.w && g.h == v.h) {
                    used[j] = true;
                    s.visible.push_back(int(j));
                    found = true;
                    break;
                }
            }
            if (!found) throw RuntimeError("visible label not present in oracle file: " + stems[i]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Content hash over every regular file under root, in sorted relative-path
// order. Guards against silent train/eval dataset mismatch.
inline uint64_t dataset_fingerprint(const std::string& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return a.lexically_relative(root) < b.lexically_relative(root);
    });
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : files) {
        std::string rel = p.lexically_relative(root).generic_string();
        h = fnv1a64(rel.data(), rel.size(), h);
        std::ifstream f(p, std::ios::binary);
        std::vector<char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        h = fnv1a64(buf.data(), buf.size(), h);
    }
    return h;
}

}  // namespace densedet
