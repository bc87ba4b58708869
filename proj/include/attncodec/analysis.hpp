#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/tensor.hpp"
#include "attncodec/vit.hpp"

namespace attncodec {

/// Patch coordinates in patch units; token i sits at (i / cols, i % cols).
struct PatchGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    double distance(std::size_t i, std::size_t j) const {
        const double dr = static_cast<double>(i / cols) - static_cast<double>(j / cols);
        const double dc = static_cast<double>(i % cols) - static_cast<double>(j % cols);
        return std::sqrt(dr * dr + dc * dc);
    }
    double diagonal() const {
        const double r = rows ? rows - 1.0 : 0.0, c = cols ? cols - 1.0 : 0.0;
        return std::sqrt(r * r + c * c);
    }
};

struct FlowMap {
    std::size_t layer = 0;
    std::vector<std::size_t> inflow;   // argmax over row k
    std::vector<std::size_t> outflow;  // argmax over column k
};

struct DistanceReport {
    std::vector<double> d_avg;
    std::vector<double> d_top1;
};

struct SimilarityProfile {
    std::vector<double> cosine;  // per layer
};

struct StageReport {
    std::size_t s = 0;  // first layer of stage 2
    std::size_t t = 0;  // first layer of stage 3
    bool degenerate = false;
    std::vector<double> smoothed;  // indexed by layer; entries outside the window are NaN
    std::array<double, 3> stage_mean_d_avg{};
};

struct PcaResult {
    Tensor scores;                     // N x k
    Tensor components;                 // k x dim, unit rows
    std::vector<double> mean;          // dim
    std::vector<double> explained;     // share of total variance per component
};

namespace detail {
inline void require_square(const Tensor& a, const char* op) {
    require(a.rank() == 2 && a.dim(0) == a.dim(1) && a.dim(0) > 0,
            std::string(op) + ": attention must be a non-empty square matrix, got " + shape_string(a.shape()));
}
}  // namespace detail

/// Dominant information pathways. Lowest index wins ties.
inline FlowMap inflow_outflow(const Tensor& attention, std::size_t layer = 0) {
    detail::require_square(attention, "inflow_outflow");
    const std::size_t n = attention.dim(0);
    FlowMap fm{layer, std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0)};
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t best_row = 0, best_col = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (attention(k, j) > attention(k, best_row)) best_row = j;
            if (attention(j, k) > attention(best_col, k)) best_col = j;
        }
        fm.inflow[k] = best_row;
        fm.outflow[k] = best_col;
    }
    return fm;
}

/// Drops the CLS row/column (index 0) and renormalises rows to sum to one.
inline Tensor patch_submatrix(const Tensor& attention, bool has_cls) {
    detail::require_square(attention, "patch_submatrix");
    if (!has_cls) return attention;
    const std::size_t n = attention.dim(0) - 1;
    require(n > 0, "patch_submatrix: no patch tokens");
    Tensor out(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += (out(i, j) = attention(i + 1, j + 1));
        if (sum > 0.0)
            for (std::size_t j = 0; j < n; ++j) out(i, j) /= sum;
        else
            for (std::size_t j = 0; j < n; ++j) out(i, j) = 1.0 / static_cast<double>(n);
    }
    return out;
}

struct AttentionDistance {
    double d_avg = 0.0;
    double d_top1 = 0.0;
};

/// Attention-weighted mean distance and distance to the most attended token,
/// in patch units, for a patch-only attention matrix.
inline AttentionDistance attention_distances(const Tensor& attention, const PatchGrid& grid) {
    detail::require_square(attention, "attention_distances");
    const std::size_t n = attention.dim(0);
    require(grid.size() == n, "attention_distances: grid " + std::to_string(grid.rows) + "x" +
                                  std::to_string(grid.cols) + " does not match " + std::to_string(n) + " tokens");
    AttentionDistance d;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += attention(i, j) * grid.distance(i, j);
            if (attention(i, j) > attention(i, best)) best = j;
        }
        d.d_avg += row;
        d.d_top1 += grid.distance(i, best);
    }
    d.d_avg /= static_cast<double>(n);
    d.d_top1 /= static_cast<double>(n);
    return d;
}

/// Per-layer distances of a captured trace (CLS stripped and renormalised).
inline DistanceReport trace_distances(const ViTTrace& trace) {
    DistanceReport r;
    const PatchGrid grid{trace.grid, trace.grid};
    for (const LayerTrace& lt : trace.layers) {
        require(lt.attention.size() > 0, "trace_distances: attention not captured");
        const auto d = attention_distances(patch_submatrix(lt.attention, trace.has_cls), grid);
        r.d_avg.push_back(d.d_avg);
        r.d_top1.push_back(d.d_top1);
    }
    return r;
}

/// Mean over tokens of cos(a_i, b_i). Zero-norm pairs count 1 when both are
/// zero, otherwise 0.
inline double mean_token_cosine(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && a.shape() == b.shape(), "mean_token_cosine: token shapes differ");
    const std::size_t n = a.dim(0), d = a.dim(1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += a(i, j) * b(i, j);
            na += a(i, j) * a(i, j);
            nb += b(i, j) * b(i, j);
        }
        if (na == 0.0 || nb == 0.0)
            total += (na == 0.0 && nb == 0.0) ? 1.0 : 0.0;
        else
            total += std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    }
    return total / static_cast<double>(n);
}

inline SimilarityProfile layer_similarity(const ViTTrace& a, const ViTTrace& b) {
    require(a.layers.size() == b.layers.size() && a.grid == b.grid && a.has_cls == b.has_cls,
            "layer_similarity: traces come from different model configurations");
    SimilarityProfile p;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        require(a.layers[l].tokens.size() > 0 && b.layers[l].tokens.size() > 0,
                "layer_similarity: tokens not captured");
        require(a.layers[l].tokens.shape() == b.layers[l].tokens.shape(),
                "layer_similarity: token shapes differ at layer " + std::to_string(l));
        p.cosine.push_back(mean_token_cosine(a.layers[l].tokens, b.layers[l].tokens));
    }
    return p;
}

/// Top-k principal components by power iteration with deflation.
///
/// Fully deterministic: 200 iterations per component starting from the first
/// canonical basis vector (the next one is tried if the start lies in the
/// null space). Each component's largest-magnitude entry is made positive.
inline PcaResult pca_project(const Tensor& tokens, std::size_t k = 3) {
    require(tokens.rank() == 2, "pca_project: tokens must be N x dim");
    const std::size_t n = tokens.dim(0), d = tokens.dim(1);
    require(k < n, "pca_project: k must be smaller than the number of tokens");
    require(k >= 1 && k <= d, "pca_project: k must be in [1, dim]");
    constexpr int kIterations = 200;

    PcaResult res;
    res.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) res.mean[j] += tokens(i, j);
    for (double& m : res.mean) m /= static_cast<double>(n);

    Tensor cov(Shape{d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = tokens(i, a) - res.mean[a];
            for (std::size_t b = 0; b < d; ++b) cov(a, b) += xa * (tokens(i, b) - res.mean[b]);
        }
    for (double& v : cov.data()) v /= static_cast<double>(n);
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) trace += cov(a, a);

    auto mat_vec = [&](const std::vector<double>& v) {
        std::vector<double> out(d, 0.0);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) out[a] += cov(a, b) * v[b];
        return out;
    };
    auto norm = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };

    res.components = Tensor(Shape{k, d});
    const double tiny = 1e-300 + 1e-14 * trace;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> v(d, 0.0);
        double lambda = 0.0;
        for (std::size_t start = 0; start < d; ++start) {
            v.assign(d, 0.0);
            v[start] = 1.0;
            bool collapsed = false;
            for (int it = 0; it < kIterations; ++it) {
                std::vector<double> w = mat_vec(v);
                const double nw = norm(w);
                if (nw <= tiny) {
                    collapsed = true;
                    break;
                }
                for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / nw;
            }
            if (!collapsed) break;
        }
        const std::vector<double> cv = mat_vec(v);
        for (std::size_t a = 0; a < d; ++a) lambda += v[a] * cv[a];
        std::size_t arg = 0;
        for (std::size_t a = 1; a < d; ++a)
            if (std::abs(v[a]) > std::abs(v[arg])) arg = a;
        if (v[arg] < 0.0)
            for (double& x : v) x = -x;
        for (std::size_t a = 0; a < d; ++a) res.components(c, a) = v[a];
        res.explained.push_back(trace > 0.0 ? std::max(lambda, 0.0) / trace : 0.0);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) cov(a, b) -= lambda * v[a] * v[b];
    }

    res.scores = Tensor(Shape{n, k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t a = 0; a < d; ++a) s += (tokens(i, a) - res.mean[a]) * res.components(c, a);
            res.scores(i, c) = s;
        }
    return res;
}

/// Inverse of pca_project restricted to the kept components.
inline Tensor pca_reconstruct(const PcaResult& pca) {
    const std::size_t n = pca.scores.dim(0), k = pca.scores.dim(1), d = pca.mean.size();
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            double v = pca.mean[a];
            for (std::size_t c = 0; c < k; ++c) v += pca.scores(i, c) * pca.components(c, a);
            out(i, a) = v;
        }
    return out;
}

/// Three-stage segmentation heuristic over a per-layer D_avg curve.
///
/// A 3-tap moving average is taken over full windows only, so the smoothed
/// value for layer l (1 <= l <= L-2) averages layers l-1..l+1. With m the
/// smoothed argmin and theta = min + 0.5 (first smoothed value - min):
/// s is the first layer below theta, t the first layer after m above theta
/// (last layer if never). A curve that never dips below theta is degenerate
/// and reports s = t = m.
inline StageReport segment_stages(const std::vector<double>& d_avg) {
    const std::size_t layers = d_avg.size();
    require(layers >= 4, "segment_stages: need at least 4 layers, got " + std::to_string(layers));
    StageReport r;
    r.smoothed.assign(layers, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t l = 1; l + 1 < layers; ++l) r.smoothed[l] = (d_avg[l - 1] + d_avg[l] + d_avg[l + 1]) / 3.0;

    std::size_t m = 1;
    for (std::size_t l = 2; l + 1 < layers; ++l)
        if (r.smoothed[l] < r.smoothed[m]) m = l;
    const double lo = r.smoothed[m];
    const double theta = lo + 0.5 * (r.smoothed[1] - lo);

    std::size_t s = 0;
    for (std::size_t l = 1; l + 1 < layers; ++l)
        if (r.smoothed[l] < theta) {
            s = l;
            break;
        }
    if (s == 0) {
        r.degenerate = true;
        r.s = r.t = m;
    } else {
        r.s = s;
        r.t = layers - 1;
        for (std::size_t l = m + 1; l + 1 < layers; ++l)
            if (r.smoothed[l] > theta) {
                r.t = l;
                break;
            }
    }

    const std::array<std::size_t, 4> bounds{0, r.s, r.t, layers};
    for (std::size_t st = 0; st < 3; ++st) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t l = bounds[st]; l < bounds[st + 1]; ++l, ++count) sum += d_avg[l];
        r.stage_mean_d_avg[st] = count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

}  // namespace attncodec
