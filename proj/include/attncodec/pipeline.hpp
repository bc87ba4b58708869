#pragma once

#include <cstddef>
#include <vector>

#include "attncodec/guidance.hpp"
#include "attncodec/image.hpp"
#include "attncodec/vit.hpp"

// Image -> guidance map, single view or tiled.

namespace attncodec {

struct GuidanceOptions {
    std::vector<std::size_t> layers = {0, 1, 2};
    std::size_t rows = 8;
    std::size_t cols = 8;
    double k = kDefaultK;
    int levels = 3;
    std::size_t tile_rows = 1;
    std::size_t tile_cols = 1;
};

/// CLS attention of `layers`, pooled to rows x cols. The whole image is
/// resized to the model input without cropping so cells line up with pixels.
inline ContinuousMap image_importance(const VitModel& model, const Image& img, const std::vector<std::size_t>& layers,
                                      std::size_t rows, std::size_t cols) {
    require(img.width > 0 && img.height > 0, "image_importance: empty image");
    const std::size_t size = model.config().image_size;
    const Tensor input = resize_bilinear(to_tensor(img), size, size);
    const ViTTrace trace = model.forward(input, CaptureSet{.attention = false, .tokens = false, .cls_rows = true});
    return importance_map(trace, layers, rows, cols);
}

/// Global map over the whole image plus one local map per tile, fused.
inline ContinuousMap tiled_importance(const VitModel& model, const Image& img, const GuidanceOptions& opt) {
    require(opt.tile_rows > 0 && opt.tile_cols > 0, "tiled_importance: empty tile layout");
    require(opt.rows % opt.tile_rows == 0 && opt.cols % opt.tile_cols == 0,
            "tiled_importance: map grid " + std::to_string(opt.rows) + "x" + std::to_string(opt.cols) +
                " is not divisible by tiles " + std::to_string(opt.tile_rows) + "x" + std::to_string(opt.tile_cols));
    require(img.width >= opt.tile_cols && img.height >= opt.tile_rows, "tiled_importance: more tiles than pixels");
    const ContinuousMap global = image_importance(model, img, opt.layers, opt.rows, opt.cols);
    const std::size_t lr = opt.rows / opt.tile_rows, lc = opt.cols / opt.tile_cols;
    std::vector<ContinuousMap> locals;
    for (std::size_t tr = 0; tr < opt.tile_rows; ++tr)
        for (std::size_t tc = 0; tc < opt.tile_cols; ++tc) {
            const std::size_t y0 = tr * img.height / opt.tile_rows, y1 = (tr + 1) * img.height / opt.tile_rows;
            const std::size_t x0 = tc * img.width / opt.tile_cols, x1 = (tc + 1) * img.width / opt.tile_cols;
            locals.push_back(image_importance(model, crop(img, x0, y0, x1 - x0, y1 - y0), opt.layers, lr, lc));
        }
    return hierarchical_fuse(global, locals, opt.tile_rows, opt.tile_cols);
}

inline GuidanceMap build_guidance(const VitModel& model, const Image& img, const GuidanceOptions& opt = {}) {
    const bool tiled = opt.tile_rows * opt.tile_cols > 1;
    const ContinuousMap m =
        tiled ? tiled_importance(model, img, opt) : image_importance(model, img, opt.layers, opt.rows, opt.cols);
    return quantize_map(m, opt.k, opt.levels);
}

}  // namespace attncodec
