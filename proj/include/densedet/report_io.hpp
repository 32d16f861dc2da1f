#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "densedet/catalog.hpp"
#include "densedet/eval.hpp"
#include "densedet/trainer.hpp"

namespace densedet {

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["map"] = r.map;
    j["per_class"] = nlohmann::json::array();
    for (const auto& m : r.per_class) {
        nlohmann::json c;
        c["ap_defined"] = m.ap_defined;
        c["ap"] = m.ap;
        c["recall50"] = m.recall50;
        c["bg_rate"] = m.bg_rate;
        c["gt_count"] = m.gt_count;
        j["per_class"].push_back(std::move(c));
    }
    j["confusion"] = r.confusion;
    auto grp = [](const GroupMetrics& g) {
        return nlohmann::json{{"defined", g.defined},
                              {"mean_ap", g.mean_ap},
                              {"mean_recall", g.mean_recall},
                              {"mean_bg_rate", g.mean_bg_rate},
                              {"num_classes", g.num_classes}};
    };
    j["majority"] = grp(r.majority);
    j["minority"] = grp(r.minority);
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.map = j["map"].get<double>();
    for (const auto& c : j["per_class"]) {
        ClassMetrics m;
        m.ap_defined = c["ap_defined"].get<bool>();
        m.ap = c["ap"].get<double>();
        m.recall50 = c["recall50"].get<double>();
        m.bg_rate = c["bg_rate"].get<double>();
        m.gt_count = c["gt_count"].get<int>();
        r.per_class.push_back(std::move(m));
    }
    r.confusion = j["confusion"].get<std::vector<std::vector<int64_t>>>();
    auto grp = [](const nlohmann::json& g) {
        GroupMetrics m;
        m.defined = g["defined"].get<bool>();
        m.mean_ap = g["mean_ap"].get<double>();
        m.mean_recall = g["mean_recall"].get<double>();
        m.mean_bg_rate = g["mean_bg_rate"].get<double>();
        m.num_classes = g["num_classes"].get<int>();
        return m;
    };
    r.majority = grp(j["majority"]);
    r.minority = grp(j["minority"]);
    return r;
}

namespace svg {

inline std::string polyline(const std::vector<std::pair<double, double>>& pts, int w, int h,
                            const std::string& color, bool dashed = false) {
    std::ostringstream ss;
    ss << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
    if (dashed) ss << " stroke-dasharray=\"5,4\"";
    ss << " points=\"";
    for (const auto& [x, y] : pts)
        ss << 50 + x * (w - 70) << ',' << (h - 40) - y * (h - 70) << ' ';
    ss << "\"/>\n";
    return ss.str();
}

inline std::string frame(int w, int h, const std::string& title, const std::string& xlab,
                         const std::string& ylab) {
    std::ostringstream ss;
    ss << "<rect x=\"50\" y=\"30\" width=\"" << w - 70 << "\" height=\"" << h - 70
       << "\" fill=\"none\" stroke=\"#444\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
       << title << "</text>\n"
       << "<text x=\"" << w / 2 << "\" y=\"" << h - 10
       << "\" text-anchor=\"middle\" font-size=\"11\">" << xlab << "</text>\n"
       << "<text x=\"14\" y=\"" << h / 2 << "\" font-size=\"11\" transform=\"rotate(-90 14 "
       << h / 2 << ")\" text-anchor=\"middle\">" << ylab << "</text>\n";
    return ss.str();
}

inline std::string color_for(int i) {
    static const char* palette[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3",
                                    "#ff7f00", "#a65628", "#f781bf", "#666666"};
    return palette[size_t(i) % 8];
}

}  // namespace svg

inline void write_pr_curves_svg(const std::string& path, const EvalReport& r,
                                const ClassCatalog& catalog) {
    int w = 520, h = 420;
    std::ofstream f(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n"
      << svg::frame(w, h, "Precision-recall curves (IoU 0.5)", "recall", "precision");
    for (int c = 0; c < catalog.size(); ++c) {
        const auto& m = r.per_class[size_t(c)];
        if (!m.ap_defined || m.curve.empty()) continue;
        std::vector<std::pair<double, double>> pts;
        pts.push_back({0.0, m.curve.front().precision});
        for (const auto& p : m.curve) pts.push_back({p.recall, p.precision});
        bool minority = catalog[c].group == ClassGroup::minority;
        f << svg::polyline(pts, w, h, svg::color_for(c), minority);
        f << "<text x=\"" << w - 160 << "\" y=\"" << 46 + 14 * c << "\" font-size=\"10\" fill=\""
          << svg::color_for(c) << "\">" << catalog[c].name << "</text>\n";
    }
    f << "</svg>\n";
}

inline void write_metric_bars_svg(const std::string& path, const EvalReport& r,
                                  const ClassCatalog& catalog) {
    int w = 560, h = 360;
    std::ofstream f(path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n"
      << svg::frame(w, h, "AP and recall@0.5 per class", "class", "metric");
    int nc = catalog.size();
    double bw = double(w - 70) / double(std::max(1, nc));
    for (int c = 0; c < nc; ++c) {
        const auto& m = r.per_class[size_t(c)];
        double x0 = 50 + c * bw;
        double ap_h = m.ap * (h - 70);
        double rc_h = m.recall50 * (h - 70);
        f << "<rect x=\"" << x0 + 2 << "\" y=\"" << (h - 40) - ap_h << "\" width=\""
          << bw * 0.4 << "\" height=\"" << ap_h << "\" fill=\"" << svg::color_for(c) << "\"/>\n";
        f << "<rect x=\"" << x0 + 2 + bw * 0.45 << "\" y=\"" << (h - 40) - rc_h << "\" width=\""
          << bw * 0.4 << "\" height=\"" << rc_h << "\" fill=\"" << svg::color_for(c)
          << "\" opacity=\"0.5\"/>\n";
    }
    f << "</svg>\n";
}

// Full artifact set for one evaluation: text summary, per-class PR CSVs,
// confusion CSV, machine-readable JSON, rendered curves.
inline void write_eval_report(const std::string& dir, const EvalReport& r,
                              const ClassCatalog& catalog) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    {
        std::ofstream f(fs::path(dir) / "report.txt");
        f << std::fixed << std::setprecision(4);
        f << "mAP@0.5: " << r.map << "\n\n";
        f << "class metrics (AP, recall@0.5, background-miss rate, GT count):\n";
        for (int c = 0; c < catalog.size(); ++c) {
            const auto& m = r.per_class[size_t(c)];
            f << "  [" << c << "] " << catalog[c].name << " (" << to_string(catalog[c].group)
              << (catalog[c].whitelisted ? ", whitelisted" : "") << "): ";
            if (m.ap_defined)
                f << "AP " << m.ap << ", recall " << m.recall50 << ", bg-miss " << m.bg_rate
                  << ", n=" << m.gt_count << '\n';
            else
                f << "no GT instances (AP undefined)\n";
        }
        auto grp = [&](const char* name, const GroupMetrics& g) {
            f << name << ": ";
            if (g.defined)
                f << "mean AP " << g.mean_ap << ", mean recall " << g.mean_recall
                  << ", mean bg-miss " << g.mean_bg_rate << " (" << g.num_classes
                  << " classes)\n";
            else
                f << "absent\n";
        };
        f << '\n';
        grp("majority", r.majority);
        grp("minority", r.minority);
    }

    for (int c = 0; c < catalog.size(); ++c) {
        const auto& m = r.per_class[size_t(c)];
        if (!m.ap_defined) continue;
        std::ofstream f(fs::path(dir) / ("pr_class_" + std::to_string(c) + ".csv"));
        f << "confidence,recall,precision\n";
        for (const auto& p : m.curve)
            f << format_double(p.confidence) << ',' << format_double(p.recall) << ','
              << format_double(p.precision) << '\n';
    }

    {
        std::ofstream f(fs::path(dir) / "confusion.csv");
        for (const auto& row : r.confusion) {
            for (size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
            f << '\n';
        }
    }

    std::ofstream(fs::path(dir) / "report.json") << report_to_json(r).dump(2) << '\n';
    write_pr_curves_svg((fs::path(dir) / "pr_curves.svg").string(), r, catalog);
    write_metric_bars_svg((fs::path(dir) / "metric_bars.svg").string(), r, catalog);
}

// Side-by-side aggregate table (baseline vs masked, majority vs
// minority, mean +/- sample std over seeds) with delta columns.
inline std::string render_comparison_table(const ComparisonResult& cmp) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2);
    auto row = [&](const std::string& name, auto&& metric) {
        AggStat b = cmp.agg(false, metric);
        AggStat c = cmp.agg(true, metric);
        ss << std::left << std::setw(26) << name << std::right << std::setw(8) << b.mean
           << " +/- " << std::setw(5) << b.stddev << std::setw(10) << c.mean << " +/- "
           << std::setw(5) << c.stddev << std::setw(10) << (c.mean - b.mean) << '\n';
    };
    ss << std::left << std::setw(26) << "metric (%)" << std::right << std::setw(17) << "baseline"
       << std::setw(19) << "cfpl" << std::setw(10) << "delta" << '\n';
    row("majority AP", [](const RunArtifacts& r) { return 100 * r.report.majority.mean_ap; });
    row("majority recall@0.5",
        [](const RunArtifacts& r) { return 100 * r.report.majority.mean_recall; });
    row("majority bg-miss rate",
        [](const RunArtifacts& r) { return 100 * r.report.majority.mean_bg_rate; });
    row("minority AP", [](const RunArtifacts& r) { return 100 * r.report.minority.mean_ap; });
    row("minority recall@0.5",
        [](const RunArtifacts& r) { return 100 * r.report.minority.mean_recall; });
    row("minority bg-miss rate",
        [](const RunArtifacts& r) { return 100 * r.report.minority.mean_bg_rate; });
    row("overall mAP", [](const RunArtifacts& r) { return 100 * r.report.map; });
    return ss.str();
}

}  // namespace densedet
