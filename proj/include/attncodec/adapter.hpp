#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "attncodec/codec.hpp"
#include "attncodec/error.hpp"
#include "attncodec/formats.hpp"
#include "attncodec/image.hpp"
#include "attncodec/random.hpp"
#include "attncodec/tensor.hpp"
#include "attncodec/vit.hpp"

namespace attncodec {

/// Orthonormal 8x8 DCT coefficients on the 0..255 scale, divided by 8*255:
/// the DC entry becomes the level-shifted block mean on the [0,1] input scale.
inline constexpr double kLatentScale = 1.0 / (8.0 * 255.0);

/// Initial LayerNorm gain inside the adapter block. The fused correction has
/// to start on the scale of codec error, far below unit-normalised activations.
inline constexpr double kAdapterGainInit = 0.01;

/// Length of one latent token: every 8x8 block inside a patch, 3 channels,
/// 64 coefficients each.
inline std::size_t latent_token_dim(const ViTConfig& cfg) {
    require(cfg.patch_size >= kBlock, "latent tokens: patch smaller than one codec block");
    require(cfg.patch_size % kBlock == 0, "latent tokens: patch size must be a multiple of the codec block size");
    const std::size_t per_side = cfg.patch_size / kBlock;
    return per_side * per_side * 3 * kBlockArea;
}

/// One token per ViT patch: the dequantized coefficients of the blocks whose
/// centres fall in the patch (raster, then channel, then zigzag), times
/// kLatentScale.
inline Tensor latent_tokens(const Latent& latent, const ViTConfig& cfg) {
    const std::size_t dim = latent_token_dim(cfg);
    require(latent.blocks_x * kBlock == cfg.image_size && latent.blocks_y * kBlock == cfg.image_size,
            "latent tokens: codec block grid " + std::to_string(latent.blocks_x) + "x" +
                std::to_string(latent.blocks_y) + " does not cover a " + std::to_string(cfg.image_size) +
                "px patch grid");
    const std::size_t per_side = cfg.patch_size / kBlock, grid = cfg.grid();
    Tensor out(Shape{cfg.num_patches(), dim});
    for (std::size_t py = 0; py < grid; ++py)
        for (std::size_t px = 0; px < grid; ++px) {
            double* row = out.data().data() + (py * grid + px) * dim;
            std::size_t k = 0;
            for (std::size_t by = py * per_side; by < (py + 1) * per_side; ++by)
                for (std::size_t bx = px * per_side; bx < (px + 1) * per_side; ++bx) {
                    const std::size_t b = by * latent.blocks_x + bx;
                    for (std::size_t c = 0; c < 3; ++c)
                        for (std::size_t zz = 0; zz < kBlockArea; ++zz) row[k++] = latent.at(b, c, kZigzag[zz]) * kLatentScale;
                }
        }
    return out;
}

/// Latent projection plus one transformer block (ViT block layout).
struct AdapterWeights {
    Tensor proj;  // latent_dim x dim
    std::array<Tensor, kBlockTensorNames.size()> block;

    static constexpr const char* kProjName = "adapter.proj";

    /// Seeded init. The projection and the block's two output projections
    /// start at zero, so the adapter initially adds nothing; LayerNorm gains
    /// start at kAdapterGainInit.
    static AdapterWeights init(std::size_t latent_dim, const ViTConfig& cfg, std::uint64_t seed) {
        AdapterWeights w;
        w.proj = Tensor(Shape{latent_dim, cfg.dim}, 0.0);
        WeightContainer tmp;
        Rng rng(seed);
        init_block(tmp, "", cfg.dim, cfg.hidden(), rng, false, true);
        for (std::size_t t = 0; t < w.block.size(); ++t) w.block[t] = tmp.tensor(kBlockTensorNames[t]);
        for (std::size_t t : {kLn1Gain, kLn2Gain})
            for (double& v : w.block[t].data()) v *= kAdapterGainInit;
        return w;
    }

    /// All-zero adapter (exact no-op).
    static AdapterWeights zeros(std::size_t latent_dim, const ViTConfig& cfg) {
        AdapterWeights w;
        w.proj = Tensor(Shape{latent_dim, cfg.dim}, 0.0);
        for (std::size_t t = 0; t < w.block.size(); ++t) w.block[t] = Tensor(block_tensor_shape(t, cfg.dim, cfg.hidden()));
        return w;
    }

    std::size_t parameter_count() const { return 1 + block.size(); }
    Tensor& parameter(std::size_t i) { return i == 0 ? proj : block[i - 1]; }
    const Tensor& parameter(std::size_t i) const { return i == 0 ? proj : block[i - 1]; }

    WeightContainer to_container() const {
        WeightContainer wc;
        wc.add(kProjName, proj);
        for (std::size_t t = 0; t < block.size(); ++t) wc.add(std::string("adapter.block.") + kBlockTensorNames[t], block[t]);
        return wc;
    }

    static AdapterWeights from_container(const WeightContainer& wc, const ViTConfig& cfg) {
        AdapterWeights w;
        const std::size_t ld = latent_token_dim(cfg);
        auto fetch = [&](const std::string& name, const Shape& shape) {
            if (!wc.contains(name)) throw LoadError("missing tensor '" + name + "'");
            if (wc.entry(name).dims != shape)
                throw LoadError("shape mismatch for tensor '" + name + "': expected " + shape_string(shape) + ", got " +
                                shape_string(wc.entry(name).dims));
            return wc.tensor(name);
        };
        w.proj = fetch(kProjName, {ld, cfg.dim});
        for (std::size_t t = 0; t < w.block.size(); ++t)
            w.block[t] = fetch(std::string("adapter.block.") + kBlockTensorNames[t],
                               block_tensor_shape(t, cfg.dim, cfg.hidden()));
        return w;
    }
};

struct AdapterVars {
    Var proj;
    BlockVars block;
};

inline AdapterVars adapter_vars(Graph& g, const AdapterWeights& w, bool trainable) {
    AdapterVars v;
    v.proj = trainable ? g.parameter(w.proj) : g.constant(w.proj);
    for (std::size_t t = 0; t < w.block.size(); ++t)
        v.block[t] = trainable ? g.parameter(w.block[t]) : g.constant(w.block[t]);
    return v;
}

/// patch_embeddings + Block(latent_tokens * proj).
inline Var adapt(Graph& g, Var latent_toks, Var patch_embeddings, const AdapterVars& w, std::size_t heads,
                 double eps) {
    const Tensor& lt = g.value(latent_toks);
    const Tensor& pe = g.value(patch_embeddings);
    const Tensor& proj = g.value(w.proj);
    require(lt.rank() == 2 && pe.rank() == 2 && lt.dim(0) == pe.dim(0),
            "adapt: latent tokens " + shape_string(lt.shape()) + " and patch embeddings " + shape_string(pe.shape()) +
                " have different token counts");
    require(proj.rank() == 2 && proj.dim(0) == lt.dim(1) && proj.dim(1) == pe.dim(1),
            "adapt: projection " + shape_string(proj.shape()) + " does not map " + std::to_string(lt.dim(1)) + " -> " +
                std::to_string(pe.dim(1)));
    const Var x = ops::matmul(g, latent_toks, w.proj);
    return ops::add(g, patch_embeddings, transformer_block(g, x, w.block, heads, eps));
}

inline Tensor adapt(const Tensor& latent_toks, const Tensor& patch_embeddings, const AdapterWeights& w,
                    const ViTConfig& cfg) {
    Graph g;
    const AdapterVars v = adapter_vars(g, w, false);
    return g.value(adapt(g, g.constant(latent_toks), g.constant(patch_embeddings), v, cfg.heads, cfg.layer_norm_eps));
}

struct LossConfig {
    double lambda_low = 0.1;
    double lambda_high = 1.0;

    void validate() const {
        require(lambda_low >= 0.0 && lambda_high >= 0.0, "LossConfig: weights must be non-negative");
        require(lambda_low > 0.0 || lambda_high > 0.0, "LossConfig: weights cannot both be zero");
    }
};

struct LossReport {
    double l_low = 0.0;
    double l_high = 0.0;
    double l_total = 0.0;
};

/// Adapter-independent quantities for one (original, decoded) pair.
struct LossInputs {
    Tensor orig_patch;    // patch embeddings of the original
    Tensor orig_final;    // final tokens of the original (no adapter)
    Tensor dec_patch;     // patch embeddings of the decoded image
    Tensor latent_toks;
};

inline LossInputs prepare_loss_inputs(const Tensor& orig_image, const Tensor& decoded_image, const Latent& latent,
                                      const VitModel& model) {
    require(orig_image.shape() == decoded_image.shape(), "multi_level_loss: image sizes differ");
    LossInputs in;
    CaptureSet none{false, false, false, false};
    Graph g;
    const Var po = model.embed_patches(g, orig_image);
    in.orig_patch = g.value(po);
    in.orig_final = g.value(model.encode_tokens(g, po, nullptr, none));
    in.dec_patch = g.value(model.embed_patches(g, decoded_image));
    in.latent_toks = latent_tokens(latent, model.config());
    return in;
}

struct LossGraph {
    Var l_low, l_high, l_total;
};

/// Builds L_total = lambda_low * L_low + lambda_high * L_high on `g`.
/// L_low compares raw patch embeddings; L_high compares the original's final
/// tokens with those of the decoded image after adapter fusion.
inline LossGraph build_loss(Graph& g, const LossInputs& in, const VitModel& model, const AdapterVars& w,
                            const LossConfig& cfg) {
    cfg.validate();
    using namespace ops;
    const ViTConfig& vc = model.config();
    const Var dec_patch = g.constant(in.dec_patch);
    LossGraph lg;
    lg.l_low = mse(g, g.constant(in.orig_patch), dec_patch);
    const Var fused = adapt(g, g.constant(in.latent_toks), dec_patch, w, vc.heads, vc.layer_norm_eps);
    CaptureSet none{false, false, false, false};
    const Var tokens = model.encode_tokens(g, fused, nullptr, none);
    lg.l_high = mse(g, tokens, g.constant(in.orig_final));
    lg.l_total = add(g, scale(g, lg.l_low, cfg.lambda_low), scale(g, lg.l_high, cfg.lambda_high));
    return lg;
}

inline LossReport multi_level_loss(const Tensor& orig_image, const Tensor& decoded_image, const Latent& latent,
                                   const VitModel& model, const AdapterWeights& w, const LossConfig& cfg = {}) {
    const LossInputs in = prepare_loss_inputs(orig_image, decoded_image, latent, model);
    Graph g;
    const LossGraph lg = build_loss(g, in, model, adapter_vars(g, w, false), cfg);
    return {g.value(lg.l_low).item(), g.value(lg.l_high).item(), g.value(lg.l_total).item()};
}

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
    std::size_t steps = 200;
    std::size_t batch = 8;
    double warm_fraction = 0.25;  // leading share of steps logged without updates
    AdamConfig adam{};
    std::uint64_t seed = 0;
};

struct TrainResult {
    AdapterWeights weights;
    std::vector<LossReport> history;  // batch means, one per step
    std::size_t warm_steps = 0;
};

/// Codec round trip of every image at `preset`, prepared for the loss.
inline std::vector<LossInputs> prepare_dataset(const std::vector<Image>& images, const VitModel& model, int preset,
                                               double gamma = kDefaultGamma) {
    std::vector<LossInputs> out;
    out.reserve(images.size());
    const std::size_t size = model.config().image_size;
    for (const Image& img : images) {
        require(img.width == size && img.height == size,
                "train_adapter: images must be " + std::to_string(size) + "x" + std::to_string(size));
        const DecodeResult dec = decode(encode(img, EncodeOptions{preset, gamma, std::nullopt}));
        out.push_back(prepare_loss_inputs(to_tensor(img), to_tensor(dec.image), dec.latent, model));
    }
    return out;
}

/// Trains only the adapter; ViT and codec stay frozen.
inline TrainResult train_adapter(const std::vector<LossInputs>& data, const VitModel& model, const LossConfig& cfg,
                                 const TrainSchedule& sched) {
    require(!data.empty(), "train_adapter: empty dataset");
    require(sched.steps >= 1 && sched.batch >= 1, "train_adapter: steps and batch must be >= 1");
    cfg.validate();
    const ViTConfig& vc = model.config();
    TrainResult res;
    res.weights = AdapterWeights::init(latent_token_dim(vc), vc, sched.seed);
    res.warm_steps = static_cast<std::size_t>(std::floor(sched.warm_fraction * static_cast<double>(sched.steps)));
    AdamState adam;
    Rng rng(sched.seed ^ 0x9E3779B97F4A7C15ull);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    auto next_index = [&] {
        if (cursor == order.size()) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
            cursor = 0;
        }
        return order[cursor++];
    };

    const std::size_t n_params = res.weights.parameter_count();
    for (std::size_t step = 0; step < sched.steps; ++step) {
        const bool warm = step < res.warm_steps;
        std::vector<Tensor> grads;
        for (std::size_t i = 0; i < n_params; ++i) grads.emplace_back(res.weights.parameter(i).shape(), 0.0);
        LossReport mean;
        for (std::size_t b = 0; b < sched.batch; ++b) {
            const LossInputs& in = data[next_index()];
            Graph g;
            const AdapterVars vars = adapter_vars(g, res.weights, !warm);
            LossGraph lg;
            try {
                lg = build_loss(g, in, model, vars, cfg);
            } catch (const NumericError& e) {
                throw NumericError("train_adapter: non-finite loss at step " + std::to_string(step) + " (" + e.what() + ")");
            }
            mean.l_low += g.value(lg.l_low).item();
            mean.l_high += g.value(lg.l_high).item();
            if (warm) continue;
            g.backward(lg.l_total);
            for (std::size_t i = 0; i < n_params; ++i) {
                const Tensor& gi = g.grad(i == 0 ? vars.proj : vars.block[i - 1]);
                for (std::size_t j = 0; j < gi.size(); ++j) grads[i][j] += gi[j] / static_cast<double>(sched.batch);
            }
        }
        mean.l_low /= static_cast<double>(sched.batch);
        mean.l_high /= static_cast<double>(sched.batch);
        mean.l_total = cfg.lambda_low * mean.l_low + cfg.lambda_high * mean.l_high;
        if (!std::isfinite(mean.l_total))
            throw NumericError("train_adapter: non-finite loss at step " + std::to_string(step));
        res.history.push_back(mean);
        if (warm) continue;
        std::vector<Tensor> params;
        for (std::size_t i = 0; i < n_params; ++i) params.push_back(std::move(res.weights.parameter(i)));
        adam_step(params, grads, adam, sched.adam);
        for (std::size_t i = 0; i < n_params; ++i) res.weights.parameter(i) = std::move(params[i]);
    }
    return res;
}

inline TrainResult train_adapter(const std::vector<Image>& images, const VitModel& model, int preset,
                                 const LossConfig& cfg, const TrainSchedule& sched, double gamma = kDefaultGamma) {
    require(!images.empty(), "train_adapter: empty dataset");
    return train_adapter(prepare_dataset(images, model, preset, gamma), model, cfg, sched);
}

}  // namespace attncodec
