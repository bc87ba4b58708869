#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/formats.hpp"
#include "attncodec/random.hpp"
#include "attncodec/tensor.hpp"

namespace attncodec {

struct ViTConfig {
    std::size_t image_size = 32;
    std::size_t patch_size = 8;
    std::size_t dim = 32;
    std::size_t heads = 4;
    std::size_t layers = 4;
    std::size_t mlp_ratio = 4;
    bool has_cls_token = true;
    double layer_norm_eps = 1e-5;

    void validate() const {
        require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0,
                "ViTConfig: image_size must be a positive multiple of patch_size");
        require(heads > 0 && dim > 0 && dim % heads == 0, "ViTConfig: dim must be divisible by heads");
        require(layers >= 1, "ViTConfig: layers must be >= 1");
        require(mlp_ratio >= 1, "ViTConfig: mlp_ratio must be >= 1");
    }

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t num_patches() const { return grid() * grid(); }
    std::size_t num_tokens() const { return num_patches() + (has_cls_token ? 1 : 0); }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden() const { return dim * mlp_ratio; }
    std::size_t patch_pixels() const { return patch_size * patch_size * 3; }
};

// Per-block tensor names, in canonical order. Weights are (in x out): y = x W + b.
inline constexpr std::array<const char*, 16> kBlockTensorNames = {
    "ln1.gain",        "ln1.bias",     "attn.q.weight", "attn.q.bias",   "attn.k.weight", "attn.k.bias",
    "attn.v.weight",   "attn.v.bias",  "attn.out.weight", "attn.out.bias", "ln2.gain",      "ln2.bias",
    "mlp.fc1.weight",  "mlp.fc1.bias", "mlp.fc2.weight",  "mlp.fc2.bias"};

enum BlockTensor : std::size_t {
    kLn1Gain,
    kLn1Bias,
    kQWeight,
    kQBias,
    kKWeight,
    kKBias,
    kVWeight,
    kVBias,
    kOutWeight,
    kOutBias,
    kLn2Gain,
    kLn2Bias,
    kFc1Weight,
    kFc1Bias,
    kFc2Weight,
    kFc2Bias,
};

inline Shape block_tensor_shape(std::size_t which, std::size_t dim, std::size_t hidden) {
    switch (which) {
        case kQWeight:
        case kKWeight:
        case kVWeight:
        case kOutWeight: return {dim, dim};
        case kFc1Weight: return {dim, hidden};
        case kFc1Bias: return {hidden};
        case kFc2Weight: return {hidden, dim};
        default: return {dim};
    }
}

/// Every tensor a ViT of this config needs, with its shape.
inline std::vector<std::pair<std::string, Shape>> vit_tensor_manifest(const ViTConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> out;
    out.emplace_back("patch_embed.weight", Shape{cfg.patch_pixels(), cfg.dim});
    out.emplace_back("patch_embed.bias", Shape{cfg.dim});
    out.emplace_back("pos_embed", Shape{cfg.num_tokens(), cfg.dim});
    if (cfg.has_cls_token) out.emplace_back("cls_token", Shape{cfg.dim});
    for (std::size_t l = 0; l < cfg.layers; ++l)
        for (std::size_t t = 0; t < kBlockTensorNames.size(); ++t)
            out.emplace_back("layer" + std::to_string(l) + "." + kBlockTensorNames[t],
                             block_tensor_shape(t, cfg.dim, cfg.hidden()));
    return out;
}

/// Graph handles for one transformer block.
using BlockVars = std::array<Var, kBlockTensorNames.size()>;

struct BlockCapture {
    Tensor attention;                   // head-averaged, N x N
    std::vector<Tensor> head_attention; // only when per-head capture requested
};

/// Pre-LN transformer block: x + Attn(LN(x)), then + MLP(LN(.)).
inline Var transformer_block(Graph& g, Var x, const BlockVars& p, std::size_t heads, double eps,
                             BlockCapture* capture = nullptr, bool keep_heads = false) {
    using namespace ops;
    const std::size_t dim = g.value(x).dim(1);
    const std::size_t hd = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    const Var h = layernorm(g, x, p[kLn1Gain], p[kLn1Bias], eps);
    const Var q = add(g, matmul(g, h, p[kQWeight]), p[kQBias]);
    const Var k = add(g, matmul(g, h, p[kKWeight]), p[kKBias]);
    const Var v = add(g, matmul(g, h, p[kVWeight]), p[kVBias]);

    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
        const Var qh = slice(g, q, 1, i * hd, (i + 1) * hd);
        const Var kh = slice(g, k, 1, i * hd, (i + 1) * hd);
        const Var vh = slice(g, v, 1, i * hd, (i + 1) * hd);
        const Var probs = softmax_rows(g, scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt));
        if (capture) {
            const Tensor& pv = g.value(probs);
            if (i == 0) capture->attention = Tensor(pv.shape(), 0.0);
            for (std::size_t j = 0; j < pv.size(); ++j) capture->attention[j] += pv[j] / static_cast<double>(heads);
            if (keep_heads) capture->head_attention.push_back(pv);
        }
        head_out.push_back(matmul(g, probs, vh));
    }
    const Var attn = heads == 1 ? head_out[0] : concat(g, head_out, 1);
    x = add(g, x, add(g, matmul(g, attn, p[kOutWeight]), p[kOutBias]));

    const Var h2 = layernorm(g, x, p[kLn2Gain], p[kLn2Bias], eps);
    const Var mid = gelu(g, add(g, matmul(g, h2, p[kFc1Weight]), p[kFc1Bias]));
    return add(g, x, add(g, matmul(g, mid, p[kFc2Weight]), p[kFc2Bias]));
}

struct CaptureSet {
    bool attention = true;
    bool tokens = true;
    bool cls_rows = true;
    bool per_head = false;
};

struct LayerTrace {
    Tensor attention;                   // N x N head-averaged (if captured)
    std::vector<Tensor> head_attention; // per head (if requested)
    Tensor tokens;                      // N x dim block output (if captured)
    std::vector<double> cls_row;        // attention from CLS query to all N keys
};

struct ViTTrace {
    std::size_t grid = 0;  // patch grid side
    bool has_cls = true;
    std::vector<LayerTrace> layers;
    Tensor patch_embeddings;  // N_patch x dim, projection + bias + positional
    Tensor final_tokens;      // N x dim

    std::size_t num_tokens() const { return final_tokens.rank() == 2 ? final_tokens.dim(0) : 0; }

    /// Binary dump in the weight-container format.
    WeightContainer to_container() const {
        WeightContainer wc;
        wc.add("patch_embeddings", patch_embeddings);
        wc.add("final_tokens", final_tokens);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].attention.size() > 0) wc.add("layer" + std::to_string(i) + ".attention", layers[i].attention);
            if (layers[i].tokens.size() > 0) wc.add("layer" + std::to_string(i) + ".tokens", layers[i].tokens);
        }
        return wc;
    }
};

/// Immutable Vision Transformer; forward() may be called concurrently.
class VitModel {
  public:
    static VitModel load(const WeightContainer& wc, const ViTConfig& cfg) {
        cfg.validate();
        VitModel m;
        m.cfg_ = cfg;
        auto fetch = [&](const std::string& name, const Shape& shape) {
            if (!wc.contains(name)) throw LoadError("missing tensor '" + name + "'");
            const auto& e = wc.entry(name);
            if (e.dims != shape)
                throw LoadError("shape mismatch for tensor '" + name + "': expected " + shape_string(shape) + ", got " +
                                shape_string(e.dims));
            return std::make_shared<const Tensor>(wc.tensor(name));
        };
        m.patch_weight_ = fetch("patch_embed.weight", {cfg.patch_pixels(), cfg.dim});
        m.patch_bias_ = fetch("patch_embed.bias", {cfg.dim});
        m.pos_embed_ = fetch("pos_embed", {cfg.num_tokens(), cfg.dim});
        if (cfg.has_cls_token) {
            auto cls = fetch("cls_token", {cfg.dim});
            m.cls_token_ = std::make_shared<const Tensor>(cls->reshaped({1, cfg.dim}));
        }
        if (wc.contains("pre_norm.gain") || wc.contains("pre_norm.bias")) {
            m.pre_norm_gain_ = fetch("pre_norm.gain", {cfg.dim});
            m.pre_norm_bias_ = fetch("pre_norm.bias", {cfg.dim});
        }
        if (wc.contains("meta.norm_mean") || wc.contains("meta.norm_std")) {
            m.norm_mean_ = fetch("meta.norm_mean", {3});
            m.norm_std_ = fetch("meta.norm_std", {3});
        }
        m.blocks_.resize(cfg.layers);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            for (std::size_t t = 0; t < kBlockTensorNames.size(); ++t)
                m.blocks_[l][t] = fetch("layer" + std::to_string(l) + "." + kBlockTensorNames[t],
                                        block_tensor_shape(t, cfg.dim, cfg.hidden()));
        return m;
    }

    const ViTConfig& config() const noexcept { return cfg_; }

    /// Patch tokens before the transformer: flattened patches (row-major
    /// within patch, channel last) projected, biased and position-embedded.
    Var embed_patches(Graph& g, const Tensor& image) const {
        check_image(image);
        const std::size_t p = cfg_.patch_size, grid = cfg_.grid(), w = cfg_.image_size;
        Tensor patches(Shape{cfg_.num_patches(), cfg_.patch_pixels()});
        for (std::size_t py = 0; py < grid; ++py)
            for (std::size_t px = 0; px < grid; ++px) {
                double* row = patches.data().data() + (py * grid + px) * cfg_.patch_pixels();
                std::size_t k = 0;
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        for (std::size_t c = 0; c < 3; ++c) {
                            double v = image[((py * p + y) * w + px * p + x) * 3 + c];
                            if (norm_mean_) v = (v - (*norm_mean_)[c]) / (*norm_std_)[c];
                            row[k++] = v;
                        }
            }
        const std::size_t offset = cfg_.has_cls_token ? 1 : 0;
        Tensor pos(Shape{cfg_.num_patches(), cfg_.dim});
        std::copy(pos_embed_->data().begin() + static_cast<std::ptrdiff_t>(offset * cfg_.dim), pos_embed_->data().end(),
                  pos.data().begin());
        using namespace ops;
        const Var proj = add(g, matmul(g, g.constant(std::move(patches)), g.constant(patch_weight_)),
                             g.constant(patch_bias_));
        return add(g, proj, g.constant(std::move(pos)));
    }

    /// Prepends CLS (if any), applies the optional pre-norm and all blocks.
    /// Returns the final N x dim tokens; fills `trace->layers` if given.
    Var encode_tokens(Graph& g, Var patch_tokens, ViTTrace* trace = nullptr, const CaptureSet& capture = {}) const {
        require(g.value(patch_tokens).shape() == Shape({cfg_.num_patches(), cfg_.dim}),
                "encode_tokens: expected patch tokens of shape " +
                    shape_string({cfg_.num_patches(), cfg_.dim}) + ", got " +
                    shape_string(g.value(patch_tokens).shape()));
        using namespace ops;
        Var x = patch_tokens;
        if (cfg_.has_cls_token) {
            Tensor cls_row(Shape{1, cfg_.dim});
            for (std::size_t j = 0; j < cfg_.dim; ++j) cls_row[j] = (*cls_token_)[j] + (*pos_embed_)[j];
            const std::array<Var, 2> parts{g.constant(std::move(cls_row)), patch_tokens};
            x = concat(g, parts, 0);
        }
        if (pre_norm_gain_)
            x = layernorm(g, x, g.constant(pre_norm_gain_), g.constant(pre_norm_bias_), cfg_.layer_norm_eps);
        if (trace) {
            trace->layers.clear();
            trace->layers.resize(cfg_.layers);
        }
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            BlockCapture cap;
            const bool want_attn = trace && (capture.attention || capture.cls_rows || capture.per_head);
            x = transformer_block(g, x, block_vars(g, l), cfg_.heads, cfg_.layer_norm_eps, want_attn ? &cap : nullptr,
                                  capture.per_head);
            if (trace) {
                LayerTrace& lt = trace->layers[l];
                if (capture.cls_rows && cfg_.has_cls_token) {
                    const std::size_t n = cap.attention.dim(1);
                    lt.cls_row.assign(cap.attention.data().begin(), cap.attention.data().begin() + static_cast<std::ptrdiff_t>(n));
                }
                if (capture.per_head) lt.head_attention = std::move(cap.head_attention);
                if (capture.attention) lt.attention = std::move(cap.attention);
                if (capture.tokens) lt.tokens = g.value(x);
            }
        }
        return x;
    }

    BlockVars block_vars(Graph& g, std::size_t layer) const {
        BlockVars vars;
        for (std::size_t t = 0; t < vars.size(); ++t) vars[t] = g.constant(blocks_.at(layer)[t]);
        return vars;
    }

    /// Deterministic forward pass; image is image_size x image_size x 3 in [0,1].
    ViTTrace forward(const Tensor& image, const CaptureSet& capture = {}) const {
        Graph g;
        ViTTrace trace;
        trace.grid = cfg_.grid();
        trace.has_cls = cfg_.has_cls_token;
        const Var patches = embed_patches(g, image);
        trace.patch_embeddings = g.value(patches);
        const Var out = encode_tokens(g, patches, &trace, capture);
        trace.final_tokens = g.value(out);
        return trace;
    }

  private:
    void check_image(const Tensor& image) const {
        require(image.rank() == 3 && image.dim(0) == cfg_.image_size && image.dim(1) == cfg_.image_size &&
                    image.dim(2) == 3,
                "forward: expected image of shape " + shape_string({cfg_.image_size, cfg_.image_size, 3}) + ", got " +
                    shape_string(image.shape()));
        for (double v : image.data())
            require(v >= 0.0 && v <= 1.0, "forward: image values must lie in [0,1]");
    }

    ViTConfig cfg_;
    std::shared_ptr<const Tensor> patch_weight_, patch_bias_, pos_embed_, cls_token_;
    std::shared_ptr<const Tensor> pre_norm_gain_, pre_norm_bias_;
    std::shared_ptr<const Tensor> norm_mean_, norm_std_;
    std::vector<std::array<std::shared_ptr<const Tensor>, kBlockTensorNames.size()>> blocks_;
};

/// Options for seeded toy weights (tests and CLI demos).
struct ToyWeightOptions {
    bool zero_query_key = false;  // uniform attention everywhere
    /// Blocks with index >= this get zero output projections (residual pass-through).
    std::size_t identity_blocks_from = static_cast<std::size_t>(-1);
};

inline void init_block(WeightContainer& wc, const std::string& prefix, std::size_t dim, std::size_t hidden, Rng& rng,
                       bool zero_qk, bool zero_outputs) {
    for (std::size_t t = 0; t < kBlockTensorNames.size(); ++t) {
        const Shape shape = block_tensor_shape(t, dim, hidden);
        Tensor w(shape);
        switch (t) {
            case kLn1Gain:
            case kLn2Gain:
                for (double& v : w.data()) v = 1.0 + 0.1 * rng.normal();
                break;
            case kQWeight:
            case kKWeight:
            case kVWeight:
            case kOutWeight:
            case kFc1Weight:
            case kFc2Weight: {
                const bool zero = (zero_qk && (t == kQWeight || t == kKWeight)) ||
                                  (zero_outputs && (t == kOutWeight || t == kFc2Weight));
                const double sd = 1.0 / std::sqrt(static_cast<double>(shape[0]));
                for (double& v : w.data()) v = zero ? 0.0 : rng.normal(0.0, sd);
                break;
            }
            default: {
                const bool zero = (zero_qk && (t == kQBias || t == kKBias)) ||
                                  (zero_outputs && (t == kOutBias || t == kFc2Bias));
                for (double& v : w.data()) v = zero ? 0.0 : 0.02 * rng.normal();
            }
        }
        wc.add(prefix + kBlockTensorNames[t], w);
    }
}

/// Seeded random ViT weights for `cfg`.
inline WeightContainer make_toy_weights(const ViTConfig& cfg, std::uint64_t seed, const ToyWeightOptions& opt = {}) {
    cfg.validate();
    Rng rng(seed);
    WeightContainer wc;
    auto random = [&](const Shape& shape, double sd) {
        Tensor t(shape);
        for (double& v : t.data()) v = rng.normal(0.0, sd);
        return t;
    };
    wc.add("patch_embed.weight", random({cfg.patch_pixels(), cfg.dim}, 1.0 / std::sqrt(double(cfg.patch_pixels()))));
    wc.add("patch_embed.bias", random({cfg.dim}, 0.02));
    wc.add("pos_embed", random({cfg.num_tokens(), cfg.dim}, 0.1));
    if (cfg.has_cls_token) wc.add("cls_token", random({cfg.dim}, 0.5));
    for (std::size_t l = 0; l < cfg.layers; ++l)
        init_block(wc, "layer" + std::to_string(l) + ".", cfg.dim, cfg.hidden(), rng, opt.zero_query_key,
                   l >= opt.identity_blocks_from);
    return wc;
}

}  // namespace attncodec
