#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/vit.hpp"

namespace attncodec {

/// Non-negative importance scores on a small grid.
struct ContinuousMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major
    std::vector<std::size_t> layers;  // provenance
    std::string source;

    ContinuousMap() = default;
    ContinuousMap(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Per-cell rate levels: -1 lower rate, 0 base, +1 higher rate (+-2 in
/// five-level mode).
struct GuidanceMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int8_t> levels;
    double mu = 0.0;
    double sigma = 0.0;
    double k = 0.75;
    int level_count = 3;

    GuidanceMap() = default;
    GuidanceMap(std::size_t r, std::size_t c, int count = 3) : rows(r), cols(c), levels(r * c, 0), level_count(count) {}

    std::int8_t operator()(std::size_t r, std::size_t c) const { return levels[r * cols + c]; }
    std::int8_t& operator()(std::size_t r, std::size_t c) { return levels[r * cols + c]; }
    int max_level() const { return level_count == 5 ? 2 : 1; }
    bool empty() const { return levels.empty(); }
};

inline constexpr double kDefaultK = 0.75;

/// Area-weighted resampling of a grid to out_rows x out_cols.
inline std::vector<double> area_pool(const std::vector<double>& src, std::size_t rows, std::size_t cols,
                                     std::size_t out_rows, std::size_t out_cols) {
    require(rows > 0 && cols > 0 && out_rows > 0 && out_cols > 0, "area_pool: empty grid");
    auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };
    std::vector<double> out(out_rows * out_cols, 0.0);
    const double sy = static_cast<double>(rows) / static_cast<double>(out_rows);
    const double sx = static_cast<double>(cols) / static_cast<double>(out_cols);
    for (std::size_t i = 0; i < out_rows; ++i) {
        const double y0 = i * sy, y1 = (i + 1) * sy;
        for (std::size_t j = 0; j < out_cols; ++j) {
            const double x0 = j * sx, x1 = (j + 1) * sx;
            double acc = 0.0, area = 0.0;
            for (auto r = static_cast<std::size_t>(std::floor(y0)); r < rows && static_cast<double>(r) < y1; ++r) {
                const double wy = overlap(y0, y1, static_cast<double>(r), r + 1.0);
                for (auto c = static_cast<std::size_t>(std::floor(x0)); c < cols && static_cast<double>(c) < x1; ++c) {
                    const double w = wy * overlap(x0, x1, static_cast<double>(c), c + 1.0);
                    acc += w * src[r * cols + c];
                    area += w;
                }
            }
            out[i * out_cols + j] = area > 0.0 ? acc / area : 0.0;
        }
    }
    return out;
}

/// Mean CLS-to-patch attention over `layers`, pooled to out_rows x out_cols.
inline ContinuousMap importance_map(const ViTTrace& trace, const std::vector<std::size_t>& layers,
                                    std::size_t out_rows, std::size_t out_cols) {
    require(trace.has_cls, "importance_map: model has no CLS token");
    require(!layers.empty(), "importance_map: no layers selected");
    const std::size_t grid = trace.grid;
    const std::size_t np = grid * grid;
    std::vector<double> acc(np, 0.0);
    for (std::size_t l : layers) {
        require(l < trace.layers.size(), "importance_map: layer " + std::to_string(l) + " >= depth " +
                                             std::to_string(trace.layers.size()));
        const auto& row = trace.layers[l].cls_row;
        require(row.size() == np + 1, "importance_map: CLS rows not captured for layer " + std::to_string(l));
        for (std::size_t i = 0; i < np; ++i) acc[i] += row[i + 1];
    }
    for (double& v : acc) v /= static_cast<double>(layers.size());
    ContinuousMap m(out_rows, out_cols);
    m.values = area_pool(acc, grid, grid, out_rows, out_cols);
    m.layers = layers;
    return m;
}

/// Population mean and standard deviation of the cells.
inline std::pair<double, double> map_stats(const std::vector<double>& values) {
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var /= static_cast<double>(values.size());
    return {mu, std::sqrt(var)};
}

/// Spread at rounding-noise level (constant input after float pooling) counts as none.
inline double effective_sigma(const std::vector<double>& values, double sigma) {
    double scale = 0.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    return sigma <= 1e-12 * scale ? 0.0 : sigma;
}

/// mu +- k sigma thresholding into 3 (or 5) rate levels; a flat map (sigma
/// zero up to rounding) puts every cell on the base level.
inline GuidanceMap quantize_map(const ContinuousMap& map, double k = kDefaultK, int levels = 3) {
    require(!map.values.empty() && map.rows * map.cols == map.values.size(), "quantize_map: empty map");
    require(levels == 3 || levels == 5, "quantize_map: levels must be 3 or 5");
    require(k > 0.0, "quantize_map: k must be positive");
    for (double v : map.values) require(std::isfinite(v), "quantize_map: non-finite cell");
    GuidanceMap gm(map.rows, map.cols, levels);
    const auto [mu, raw_sigma] = map_stats(map.values);
    const double sigma = effective_sigma(map.values, raw_sigma);
    gm.mu = mu;
    gm.sigma = sigma;
    gm.k = k;
    if (sigma == 0.0) return gm;
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        const double v = map.values[i];
        std::int8_t lv = 0;
        if (v > mu + k * sigma) lv = 1;
        if (v < mu - k * sigma) lv = -1;
        if (levels == 5) {
            if (v > mu + 2.0 * k * sigma) lv = 2;
            if (v < mu - 2.0 * k * sigma) lv = -2;
        }
        gm.levels[i] = lv;
    }
    return gm;
}

inline std::vector<double> zscore(const std::vector<double>& values) {
    const auto [mu, raw_sigma] = map_stats(values);
    const double sigma = effective_sigma(values, raw_sigma);
    std::vector<double> out(values.size(), 0.0);
    if (sigma == 0.0) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mu) / sigma;
    return out;
}

/// Global/local fusion for tiled inputs. `local_maps` are row-major over a
/// tile_rows x tile_cols layout and must share one shape; the result has
/// (tile_rows*local.rows) x (tile_cols*local.cols) cells.
inline ContinuousMap hierarchical_fuse(const ContinuousMap& global_map, const std::vector<ContinuousMap>& local_maps,
                                       std::size_t tile_rows, std::size_t tile_cols) {
    require(tile_rows > 0 && tile_cols > 0, "hierarchical_fuse: empty tile layout");
    require(local_maps.size() == tile_rows * tile_cols,
            "hierarchical_fuse: expected " + std::to_string(tile_rows * tile_cols) + " local maps, got " +
                std::to_string(local_maps.size()));
    require(global_map.rows > 0 && global_map.cols > 0 && global_map.values.size() == global_map.rows * global_map.cols,
            "hierarchical_fuse: empty global map");
    const std::size_t lr = local_maps[0].rows, lc = local_maps[0].cols;
    for (const auto& m : local_maps)
        require(m.rows == lr && m.cols == lc && m.values.size() == lr * lc && lr > 0 && lc > 0,
                "hierarchical_fuse: tile map shapes differ");
    const std::size_t rows = tile_rows * lr, cols = tile_cols * lc;
    ContinuousMap out(rows, cols);
    const std::vector<double> g = zscore(global_map.values);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t gr = r * global_map.rows / rows, gc = c * global_map.cols / cols;
            out(r, c) = g[gr * global_map.cols + gc];
        }
    for (std::size_t tr = 0; tr < tile_rows; ++tr)
        for (std::size_t tc = 0; tc < tile_cols; ++tc) {
            const std::vector<double> l = zscore(local_maps[tr * tile_cols + tc].values);
            for (std::size_t r = 0; r < lr; ++r)
                for (std::size_t c = 0; c < lc; ++c) out(tr * lr + r, tc * lc + c) += l[r * lc + c];
        }
    out.layers = global_map.layers;
    out.source = "hierarchical";
    return out;
}

/// Bits per cell in the packed form.
inline std::size_t map_code_bits(int level_count) { return level_count == 5 ? 3 : 2; }

inline std::size_t packed_map_size(std::size_t rows, std::size_t cols, int level_count) {
    return (rows * cols * map_code_bits(level_count) + 7) / 8;
}

/// Row-major fixed-width packing, MSB first. Codes are level + max_level
/// (3-level: 0 -> -1, 1 -> 0, 2 -> +1, 3 reserved).
inline std::vector<std::uint8_t> pack_map(const GuidanceMap& gm) {
    require(gm.level_count == 3 || gm.level_count == 5, "pack_map: level_count must be 3 or 5");
    require(gm.levels.size() == gm.rows * gm.cols, "pack_map: level count does not match dimensions");
    const std::size_t bits = map_code_bits(gm.level_count);
    std::vector<std::uint8_t> out(packed_map_size(gm.rows, gm.cols, gm.level_count), 0);
    std::size_t pos = 0;
    for (std::int8_t lv : gm.levels) {
        require(std::abs(lv) <= gm.max_level(), "pack_map: level out of range");
        const unsigned code = static_cast<unsigned>(lv + gm.max_level());
        for (std::size_t b = bits; b-- > 0; ++pos)
            if ((code >> b) & 1u) out[pos / 8] |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
    }
    return out;
}

inline GuidanceMap unpack_map(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols,
                              int level_count = 3) {
    require(level_count == 3 || level_count == 5, "unpack_map: level_count must be 3 or 5");
    if (bytes.size() != packed_map_size(rows, cols, level_count))
        throw FormatError("unpack_map: expected " + std::to_string(packed_map_size(rows, cols, level_count)) +
                          " bytes, got " + std::to_string(bytes.size()));
    GuidanceMap gm(rows, cols, level_count);
    const std::size_t bits = map_code_bits(level_count);
    const unsigned max_code = static_cast<unsigned>(2 * gm.max_level());
    std::size_t pos = 0;
    for (std::size_t i = 0; i < rows * cols; ++i) {
        unsigned code = 0;
        for (std::size_t b = 0; b < bits; ++b, ++pos) code = (code << 1) | ((bytes[pos / 8] >> (7 - pos % 8)) & 1u);
        if (code > max_code) throw FormatError("unpack_map: reserved code " + std::to_string(code) + " at cell " + std::to_string(i));
        gm.levels[i] = static_cast<std::int8_t>(static_cast<int>(code) - gm.max_level());
    }
    return gm;
}

}  // namespace attncodec
