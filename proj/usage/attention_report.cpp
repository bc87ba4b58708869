// Per-layer attention distances, stage split and token similarity between an
// image and its compressed copy.

#include <cstdio>

#include "attncodec/attncodec.hpp"

int main() {
    using namespace attncodec;
    const ViTConfig cfg{.image_size = 64, .patch_size = 8, .dim = 32, .heads = 4, .layers = 6};
    const VitModel model = VitModel::load(make_toy_weights(cfg, 2), cfg);

    const Image img = synthetic::natural(96, 96, 4);
    const Image lossy = decode(encode(img, EncodeOptions{.preset = 1})).image;

    const ViTTrace a = model.forward(preprocess(img, cfg.image_size));
    const ViTTrace b = model.forward(preprocess(lossy, cfg.image_size));

    const DistanceReport dist = trace_distances(a);
    const SimilarityProfile sim = layer_similarity(a, b);
    std::printf("layer  d_avg   d_top1  cosine\n");
    for (std::size_t l = 0; l < dist.d_avg.size(); ++l)
        std::printf("%5zu  %.4f  %.4f  %.5f\n", l, dist.d_avg[l], dist.d_top1[l], sim.cosine[l]);

    const StageReport stages = segment_stages(dist.d_avg);
    if (stages.degenerate)
        std::printf("stages: degenerate\n");
    else
        std::printf("stages start at layers 0, %zu, %zu\n", stages.s, stages.t);

    const FlowMap flow = inflow_outflow(a.layers.back().attention, cfg.layers - 1);
    std::printf("last layer: token 0 attends most to token %zu\n", flow.inflow[0]);
}
