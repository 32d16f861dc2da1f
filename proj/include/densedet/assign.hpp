#pragma once

#include <tuple>
#include <vector>

#include "densedet/box.hpp"
#include "densedet/net.hpp"

namespace densedet {

// Target assignment over one prediction grid. A cell is positive iff its
// center lies inside a visible GT box; ties go to the smallest box.
// gt_area flags every (cell, class) pair whose center is inside any GT
// box of that class; it is the classification-side counterpart of fg.
struct TargetAssignment {
    int G = 0;
    int nc = 0;
    std::vector<uint8_t> fg;           // G*G
    std::vector<int> target_class;     // G*G, -1 at negatives
    std::vector<float> target_sides;   // G*G*4, stride units (l,t,r,b)
    std::vector<uint8_t> gt_area;      // G*G*nc
    int num_positive = 0;

    bool is_fg(int i, int j) const { return fg[size_t(i) * G + j] != 0; }
    int cls(int i, int j) const { return target_class[size_t(i) * G + j]; }
    float side(int i, int j, int s) const { return target_sides[(size_t(i) * G + j) * 4 + s]; }
    bool in_gt_area(int i, int j, int c) const {
        return gt_area[(size_t(i) * G + j) * nc + c] != 0;
    }
};

inline TargetAssignment assign_targets(const std::vector<LabeledBox>& visible,
                                       const GridGeometry& geom, int num_classes, int nbins) {
    int G = geom.grid();
    TargetAssignment a;
    a.G = G;
    a.nc = num_classes;
    a.fg.assign(size_t(G) * G, 0);
    a.target_class.assign(size_t(G) * G, -1);
    a.target_sides.assign(size_t(G) * G * 4, 0.0f);
    a.gt_area.assign(size_t(G) * G * num_classes, 0);

    float max_side = float(nbins - 1);
    for (int i = 0; i < G; ++i) {
        for (int j = 0; j < G; ++j) {
            // cell center in normalized coordinates
            float cx = (float(j) + 0.5f) / float(G);
            float cy = (float(i) + 0.5f) / float(G);
            int owner = -1;
            for (size_t b = 0; b < visible.size(); ++b) {
                Box box = visible[b].corners();
                if (cx < box.x1 || cx > box.x2 || cy < box.y1 || cy > box.y2) continue;
                a.gt_area[(size_t(i) * G + j) * num_classes + visible[b].class_id] = 1;
                if (owner < 0) {
                    owner = int(b);
                    continue;
                }
                Box ob = visible[size_t(owner)].corners();
                float ba = box.area(), oa = ob.area();
                // smallest area wins; deterministic lexicographic tie-break
                bool smaller = ba < oa ||
                               (ba == oa &&
                                std::tie(box.x1, box.y1, box.x2, box.y2, visible[b].class_id) <
                                    std::tie(ob.x1, ob.y1, ob.x2, ob.y2,
                                             visible[size_t(owner)].class_id));
                if (smaller) owner = int(b);
            }
            if (owner >= 0) {
                a.fg[size_t(i) * G + j] = 1;
                a.target_class[size_t(i) * G + j] = visible[size_t(owner)].class_id;
                Box box = visible[size_t(owner)].corners();
                // distances from cell center to box sides, in stride units
                float sides[4] = {(cx - box.x1) * G, (cy - box.y1) * G, (box.x2 - cx) * G,
                                  (box.y2 - cy) * G};
                for (int s = 0; s < 4; ++s)
                    a.target_sides[(size_t(i) * G + j) * 4 + s] =
                        clampf(sides[s], 0.0f, max_side);
                ++a.num_positive;
            }
        }
    }
    return a;
}

}  // namespace densedet
