#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "attncodec/adapter.hpp"
#include "attncodec/analysis.hpp"
#include "attncodec/guidance.hpp"
#include "attncodec/metrics.hpp"

// CSV/JSON artifacts. Schemas (version 1):
//   distances.csv   layer,d_avg,d_top1
//   similarity.csv  layer,cosine_sim
//   rd.csv          preset,bpp,psnr       (psnr may be "inf")
//   history.csv     step,l_low,l_high,l_total
//   guidance json   {"version":1,"rows","cols","levels":[[..]],"mu","sigma","k","level_count"}

namespace attncodec::report {

inline std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string distances_csv(const DistanceReport& r) {
    std::ostringstream os;
    os << "layer,d_avg,d_top1\n";
    for (std::size_t l = 0; l < r.d_avg.size(); ++l) os << l << ',' << num(r.d_avg[l]) << ',' << num(r.d_top1[l]) << '\n';
    return os.str();
}

inline std::string similarity_csv(const SimilarityProfile& p) {
    std::ostringstream os;
    os << "layer,cosine_sim\n";
    for (std::size_t l = 0; l < p.cosine.size(); ++l) os << l << ',' << num(p.cosine[l]) << '\n';
    return os.str();
}

struct RdRow {
    int preset = 0;
    RDPoint point;
};

inline std::string rd_csv(const std::vector<RdRow>& rows) {
    std::ostringstream os;
    os << "preset,bpp,psnr\n";
    for (const auto& r : rows) os << r.preset << ',' << num(r.point.bpp) << ',' << num(r.point.quality) << '\n';
    return os.str();
}

inline std::vector<RdRow> parse_rd_csv(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    if (!std::getline(is, line)) throw FormatError("rd csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "preset,bpp,psnr") throw FormatError("rd csv: expected header 'preset,bpp,psnr', got '" + line + "'");
    std::vector<RdRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw FormatError("rd csv: malformed line " + std::to_string(lineno));
        try {
            RdRow r;
            r.preset = std::stoi(a);
            r.point.bpp = std::stod(b);
            r.point.quality = c == "inf" ? INFINITY : std::stod(c);
            rows.push_back(r);
        } catch (const std::logic_error&) {
            throw FormatError("rd csv: non-numeric field on line " + std::to_string(lineno));
        }
    }
    return rows;
}

inline std::string history_csv(const std::vector<LossReport>& history) {
    std::ostringstream os;
    os << "step,l_low,l_high,l_total\n";
    for (std::size_t s = 0; s < history.size(); ++s)
        os << s << ',' << num(history[s].l_low) << ',' << num(history[s].l_high) << ',' << num(history[s].l_total)
           << '\n';
    return os.str();
}

inline nlohmann::json to_json(const GuidanceMap& gm) {
    nlohmann::json levels = nlohmann::json::array();
    for (std::size_t r = 0; r < gm.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < gm.cols; ++c) row.push_back(static_cast<int>(gm(r, c)));
        levels.push_back(row);
    }
    return {{"version", 1}, {"rows", gm.rows},   {"cols", gm.cols}, {"levels", levels},
            {"mu", gm.mu},  {"sigma", gm.sigma}, {"k", gm.k},       {"level_count", gm.level_count}};
}

inline GuidanceMap guidance_from_json(const nlohmann::json& j) {
    try {
        GuidanceMap gm(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), j.value("level_count", 3));
        gm.mu = j.value("mu", 0.0);
        gm.sigma = j.value("sigma", 0.0);
        gm.k = j.value("k", kDefaultK);
        const auto& levels = j.at("levels");
        if (levels.size() != gm.rows) throw FormatError("guidance json: row count mismatch");
        for (std::size_t r = 0; r < gm.rows; ++r) {
            if (levels[r].size() != gm.cols) throw FormatError("guidance json: column count mismatch");
            for (std::size_t c = 0; c < gm.cols; ++c) {
                const int lv = levels[r][c].get<int>();
                if (std::abs(lv) > gm.max_level()) throw FormatError("guidance json: level out of range");
                gm(r, c) = static_cast<std::int8_t>(lv);
            }
        }
        return gm;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("guidance json: ") + e.what());
    }
}

inline nlohmann::json to_json(const ContinuousMap& m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"values", m.values}, {"layers", m.layers}};
}

inline nlohmann::json to_json(const FlowMap& f) {
    return {{"layer", f.layer}, {"inflow", f.inflow}, {"outflow", f.outflow}};
}

inline nlohmann::json to_json(const PcaResult& p) {
    nlohmann::json scores = nlohmann::json::array();
    for (std::size_t i = 0; i < p.scores.dim(0); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < p.scores.dim(1); ++c) row.push_back(p.scores(i, c));
        scores.push_back(row);
    }
    return {{"explained", p.explained}, {"scores", scores}};
}

inline nlohmann::json to_json(const StageReport& s) {
    auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json means = nlohmann::json::array();
    for (double v : s.stage_mean_d_avg) means.push_back(finite_or_null(v));
    nlohmann::json smoothed = nlohmann::json::array();
    for (double v : s.smoothed) smoothed.push_back(finite_or_null(v));
    return {{"s", s.s}, {"t", s.t}, {"degenerate", s.degenerate}, {"stage_mean_d_avg", means}, {"smoothed", smoothed}};
}

}  // namespace attncodec::report
