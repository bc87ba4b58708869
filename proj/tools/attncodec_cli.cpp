// attncodec command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error. Errors go to stderr as
// "ERROR:<code>: message".

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attncodec/attncodec.hpp"

namespace fs = std::filesystem;
using namespace attncodec;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Grid {
    std::size_t rows = 0, cols = 0;
};

Grid parse_grid(const std::string& text, const char* flag) {
    const auto x = text.find_first_of("xX");
    try {
        if (x == std::string::npos) throw std::invalid_argument(text);
        std::size_t used = 0;
        const Grid g{std::stoul(text.substr(0, x), &used), std::stoul(text.substr(x + 1))};
        if (used != x || g.rows == 0 || g.cols == 0) throw std::invalid_argument(text);
        return g;
    } catch (const std::logic_error&) {
        throw UsageError(std::string(flag) + " expects RxC with positive integers, got '" + text + "'");
    }
}

// --- shared option groups ---------------------------------------------------------

struct ModelOpts {
    std::string path;
    ViTConfig cfg;

    void add(CLI::App* app, bool required) {
        auto* m = app->add_option("--model", path, "Weight container (.ctwt)");
        if (required) m->required();
        app->add_option("--image-size", cfg.image_size, "ViT input side in pixels")->capture_default_str();
        app->add_option("--patch-size", cfg.patch_size, "ViT patch side in pixels")->capture_default_str();
        app->add_option("--dim", cfg.dim, "Embedding width")->capture_default_str();
        app->add_option("--heads", cfg.heads, "Attention heads")->capture_default_str();
        app->add_option("--depth", cfg.layers, "Transformer blocks")->capture_default_str();
        app->add_option("--mlp-ratio", cfg.mlp_ratio, "MLP hidden width / dim")->capture_default_str();
        app->add_flag("--no-cls{false}", cfg.has_cls_token, "Model has no CLS token");
    }

    VitModel load() const {
        if (path.empty()) throw UsageError("--model is required");
        return VitModel::load(read_container(path), cfg);
    }
};

struct GuideOpts {
    double k = kDefaultK;
    int levels = 3;
    std::vector<std::size_t> layers = {0, 1, 2};
    std::string grid = "8x8";
    std::string tiles = "1x1";

    void add(CLI::App* app) {
        app->add_option("--k", k, "Threshold multiplier on sigma")->capture_default_str();
        app->add_option("--levels", levels, "Rate levels (3 or 5)")->check(CLI::IsMember({3, 5}))->capture_default_str();
        app->add_option("--layers", layers, "Layers whose CLS attention is averaged")->capture_default_str();
        app->add_option("--grid", grid, "Guidance map size RxC")->capture_default_str();
        app->add_option("--tiles", tiles, "Tile layout RxC for hierarchical guidance")->capture_default_str();
    }

    GuidanceOptions options() const {
        const Grid g = parse_grid(grid, "--grid"), t = parse_grid(tiles, "--tiles");
        return GuidanceOptions{layers, g.rows, g.cols, k, levels, t.rows, t.cols};
    }
};

void write_text_file(const fs::path& path, const std::string& text) { write_text(path.string(), text); }

json read_json(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

std::string text_of(const std::string& path) {
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

// --- subcommands ------------------------------------------------------------------

struct EncodeCmd {
    std::string in, out, guidance_json;
    int preset = 6;
    double gamma = kDefaultGamma;
    bool guide = false;
    ModelOpts model;
    GuideOpts g;

    void add(CLI::App* app) {
        app->add_option("--in", in, "Input image (binary PPM)")->required();
        app->add_option("--out", out, "Output stream (.ctam)")->required();
        app->add_option("--preset", preset, "Quality preset 0..9")->check(CLI::Range(0, kNumPresets - 1))->capture_default_str();
        app->add_option("--gamma", gamma, "Rate ratio between guidance levels")->capture_default_str();
        app->add_flag("--guide", guide, "Derive a guidance map from --model");
        app->add_option("--guidance", guidance_json, "Use a guidance map JSON instead of computing one");
        model.add(app, false);
        g.add(app);
    }

    int run() const {
        if (guide && !guidance_json.empty()) throw UsageError("--guide and --guidance are mutually exclusive");
        const Image img = read_ppm(in);
        EncodeOptions opt{preset, gamma, std::nullopt};
        if (guide) opt.guidance = build_guidance(model.load(), img, g.options());
        if (!guidance_json.empty()) opt.guidance = report::guidance_from_json(read_json(guidance_json));
        const auto bytes = encode(img, opt);
        write_file(out, bytes);
        std::printf("%s: %zu bytes, %.4f bpp%s\n", out.c_str(), bytes.size(), bpp(bytes.size(), img.width, img.height),
                    opt.guidance ? ", guided" : "");
        return 0;
    }
};

struct DecodeCmd {
    std::string in, out, latent_out, map_out;

    void add(CLI::App* app) {
        app->add_option("--in", in, "Input stream (.ctam)")->required();
        app->add_option("--out", out, "Output image (binary PPM)")->required();
        app->add_option("--dump-latent", latent_out, "Write dequantized coefficients and symbols (.ctwt)");
        app->add_option("--map-out", map_out, "Write the embedded guidance map as JSON");
    }

    int run() const {
        const DecodeResult res = decode(read_file(in));
        write_ppm(res.image, out);
        if (!latent_out.empty()) {
            const std::size_t blocks = res.latent.block_count();
            WeightContainer wc;
            wc.add("latent.coefficients", Tensor(Shape{res.latent.blocks_y, res.latent.blocks_x, 3, kBlockArea},
                                                 res.latent.coefficients));
            std::vector<double> sym(res.symbols.begin(), res.symbols.end());
            wc.add("latent.symbols", Tensor(Shape{blocks, 3, kBlockArea}, std::move(sym)));
            write_container(wc, latent_out);
        }
        if (!map_out.empty()) {
            if (res.guidance.empty()) throw FormatError("stream carries no guidance map");
            write_text(map_out, report::to_json(res.guidance).dump(2) + "\n");
        }
        std::printf("%s: %zux%zu, preset %d, gamma %.4g%s\n", out.c_str(), res.image.width, res.image.height,
                    res.preset, res.gamma, res.guidance.empty() ? "" : ", guided");
        return 0;
    }
};

struct GuideCmd {
    std::string in, out;
    ModelOpts model;
    GuideOpts g;

    void add(CLI::App* app) {
        app->add_option("--in", in, "Input image (binary PPM)")->required();
        app->add_option("--out", out, "Output map (JSON)")->required();
        model.add(app, true);
        g.add(app);
    }

    int run() const {
        const GuidanceMap gm = build_guidance(model.load(), read_ppm(in), g.options());
        write_text(out, report::to_json(gm).dump(2) + "\n");
        int counts[5] = {};
        for (auto v : gm.levels) ++counts[v + 2];
        std::printf("%s: %zux%zu map, levels -2..2 = %d %d %d %d %d\n", out.c_str(), gm.rows, gm.cols, counts[0],
                    counts[1], counts[2], counts[3], counts[4]);
        return 0;
    }
};

struct AnalyzeCmd {
    std::string a, b, out;
    std::size_t pca_k = 3;
    ModelOpts model;

    void add(CLI::App* app) {
        app->add_option("--a", a, "Reference image (binary PPM)")->required();
        app->add_option("--b", b, "Compared image, e.g. a reconstruction (binary PPM)");
        app->add_option("--out", out, "Output directory")->required();
        app->add_option("--pca-k", pca_k, "Principal components kept")->capture_default_str();
        model.add(app, true);
    }

    int run() const {
        const VitModel m = model.load();
        const std::size_t size = m.config().image_size;
        const ViTTrace ta = m.forward(preprocess(read_ppm(a), size));
        fs::create_directories(out);
        const fs::path dir(out);
        const DistanceReport d = trace_distances(ta);
        write_text_file(dir / "distances.csv", report::distances_csv(d));
        json flows = json::array();
        for (std::size_t l = 0; l < ta.layers.size(); ++l) flows.push_back(report::to_json(inflow_outflow(ta.layers[l].attention, l)));
        write_text_file(dir / "flow.json", json{{"version", 1}, {"layers", flows}}.dump(2) + "\n");
        json pca = json::array();
        for (std::size_t l = 0; l < ta.layers.size(); ++l) {
            json entry = report::to_json(pca_project(ta.layers[l].tokens, pca_k));
            entry["layer"] = l;
            pca.push_back(entry);
        }
        write_text_file(dir / "pca.json", json{{"version", 1}, {"layers", pca}}.dump(2) + "\n");
        if (d.d_avg.size() >= 4) write_text_file(dir / "stages.json", report::to_json(segment_stages(d.d_avg)).dump(2) + "\n");
        if (!b.empty()) {
            const ViTTrace tb = m.forward(preprocess(read_ppm(b), size));
            write_text_file(dir / "similarity.csv", report::similarity_csv(layer_similarity(ta, tb)));
        }
        std::printf("%s: %zu layers analysed\n", out.c_str(), ta.layers.size());
        return 0;
    }
};

struct RdSweepCmd {
    std::string in, out, guidance_json;
    std::vector<int> presets = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    double gamma = kDefaultGamma;

    void add(CLI::App* app) {
        app->add_option("--in", in, "Input image (binary PPM)")->required();
        app->add_option("--out", out, "Output CSV (stdout if omitted)");
        app->add_option("--presets", presets, "Presets to sweep")->check(CLI::Range(0, kNumPresets - 1))->capture_default_str();
        app->add_option("--gamma", gamma, "Rate ratio between guidance levels")->capture_default_str();
        app->add_option("--guidance", guidance_json, "Guidance map JSON applied at every preset");
    }

    int run() const {
        const Image img = read_ppm(in);
        std::optional<GuidanceMap> gm;
        if (!guidance_json.empty()) gm = report::guidance_from_json(read_json(guidance_json));
        const auto pts = rd_sweep(img, presets, gm, gamma);
        std::vector<report::RdRow> rows;
        for (std::size_t i = 0; i < pts.size(); ++i) rows.push_back({presets[i], pts[i]});
        const std::string csv = report::rd_csv(rows);
        if (out.empty())
            std::fputs(csv.c_str(), stdout);
        else
            write_text(out, csv);
        return 0;
    }
};

struct TrainCmd {
    std::string out, history;
    std::vector<std::string> inputs;
    std::size_t synthetic_count = 64, source_size = 64, steps = 200, batch = 8;
    int preset = 4;
    double gamma = kDefaultGamma, lr = 1e-3, lambda_low = 0.1, lambda_high = 1.0;
    std::uint64_t seed = 0;
    ModelOpts model;

    void add(CLI::App* app) {
        app->add_option("--out", out, "Adapter weights (.ctwt)")->required();
        app->add_option("--history", history, "Per-step loss CSV");
        app->add_option("--in", inputs, "Training images (binary PPM, model input size); synthetic corpus if omitted");
        app->add_option("--synthetic", synthetic_count, "Synthetic corpus size")->capture_default_str();
        app->add_option("--source-size", source_size, "Synthetic image side before resizing")->capture_default_str();
        app->add_option("--preset", preset, "Codec preset of the training pairs")->check(CLI::Range(0, kNumPresets - 1))->capture_default_str();
        app->add_option("--gamma", gamma, "Rate ratio between guidance levels")->capture_default_str();
        app->add_option("--steps", steps, "Optimisation steps")->capture_default_str();
        app->add_option("--batch", batch, "Images per step")->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--lambda-low", lambda_low, "Weight of the patch-embedding term")->capture_default_str();
        app->add_option("--lambda-high", lambda_high, "Weight of the final-token term")->capture_default_str();
        app->add_option("--seed", seed, "Seed for the corpus, init and batch order")->capture_default_str();
        model.add(app, true);
    }

    int run() const {
        const VitModel m = model.load();
        std::vector<Image> images;
        if (inputs.empty())
            images = synthetic::training_corpus(synthetic_count, source_size, m.config().image_size, seed);
        for (const auto& p : inputs) images.push_back(read_ppm(p));
        TrainSchedule s;
        s.steps = steps;
        s.batch = batch;
        s.adam.lr = lr;
        s.seed = seed;
        const TrainResult r = train_adapter(images, m, preset, LossConfig{lambda_low, lambda_high}, s, gamma);
        write_container(r.weights.to_container(), out);
        if (!history.empty()) write_text(history, report::history_csv(r.history));
        const auto& h = r.history;
        std::printf("%s: %zu steps, L_total %.4e -> %.4e\n", out.c_str(), h.size(), h.front().l_total, h.back().l_total);
        return 0;
    }
};

struct BdRateCmd {
    std::string anchor, test;

    void add(CLI::App* app) {
        app->add_option("--anchor", anchor, "Anchor RD curve (preset,bpp,psnr CSV)")->required();
        app->add_option("--test", test, "Test RD curve (preset,bpp,psnr CSV)")->required();
    }

    int run() const {
        auto points = [](const std::string& path) {
            std::vector<RDPoint> pts;
            for (const auto& r : report::parse_rd_csv(text_of(path)))
                if (std::isfinite(r.point.quality)) pts.push_back(r.point);
            return pts;
        };
        std::printf("%+.2f%%\n", bd_rate(points(anchor), points(test)));
        return 0;
    }
};

struct InitModelCmd {
    std::string out;
    std::uint64_t seed = 0;
    bool uniform = false;
    ModelOpts model;

    void add(CLI::App* app) {
        app->add_option("--out", out, "Output container (.ctwt)")->required();
        app->add_option("--seed", seed, "Weight seed")->capture_default_str();
        app->add_flag("--uniform-attention", uniform, "Zero query/key weights so every attention row is uniform");
        model.add(app, false);
    }

    int run() const {
        write_container(make_toy_weights(model.cfg, seed, ToyWeightOptions{.zero_query_key = uniform}), out);
        std::printf("%s: %zu tensors\n", out.c_str(), vit_tensor_manifest(model.cfg).size());
        return 0;
    }
};

// --- config file --------------------------------------------------------------------

/// Turns a JSON object into command-line tokens for `sub`. Keys are long flag
/// names; flags given on the command line win.
std::vector<std::string> config_tokens(CLI::App* sub, const std::string& path, const std::vector<std::string>& argv) {
    const json cfg = read_json(path);
    if (!cfg.is_object()) throw FormatError("config '" + path + "': expected a JSON object");
    std::vector<std::string> out;
    for (const auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw(flag);
        if (opt == nullptr) throw UsageError("config '" + path + "': unknown key '" + key + "' for " + sub->get_name());
        const bool given = std::any_of(argv.begin(), argv.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
        if (given) continue;
        auto scalar = [&](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (value.is_boolean()) {
            if (opt->get_expected_min() != 0) throw UsageError("config key '" + key + "' expects a value");
            if (value.get<bool>()) out.push_back(flag);
        } else if (value.is_array()) {
            out.push_back(flag);
            for (const auto& v : value) out.push_back(scalar(v));
        } else {
            out.push_back(flag);
            out.push_back(scalar(value));
        }
    }
    return out;
}

int fail(const std::string& code, const std::string& msg, int status) {
    std::fprintf(stderr, "ERROR:%s: %s\n", code.c_str(), msg.c_str());
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attncodec: attention-guided image codec toolkit", "attncodec"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("attncodec ") + "0.1.0");

    EncodeCmd encode_cmd;
    DecodeCmd decode_cmd;
    GuideCmd guide_cmd;
    AnalyzeCmd analyze_cmd;
    RdSweepCmd rd_cmd;
    TrainCmd train_cmd;
    BdRateCmd bd_cmd;
    InitModelCmd init_cmd;
    std::map<CLI::App*, std::function<int()>> runners;
    std::string config_path;
    std::uint64_t unused_seed = 0;

    auto sub = [&](const char* name, const char* help, auto& cmd) {
        CLI::App* s = app.add_subcommand(name, help);
        cmd.add(s);
        if (s->get_option_no_throw("--seed") == nullptr)
            s->add_option("--seed", unused_seed, "Seed (this command is deterministic without one)")->capture_default_str();
        s->add_option("--config", config_path, "JSON file of flag values; command-line flags override it");
        runners[s] = [&cmd] { return cmd.run(); };
    };
    sub("encode", "Compress a PPM image, optionally with attention guidance", encode_cmd);
    sub("decode", "Reconstruct a PPM image from a stream", decode_cmd);
    sub("guide", "Compute a guidance map from CLS attention", guide_cmd);
    sub("analyze", "Attention distance, similarity, flow, PCA and stage reports", analyze_cmd);
    sub("rd-sweep", "Rate-distortion points across presets", rd_cmd);
    sub("train-adapter", "Train the decoder-side latent adapter", train_cmd);
    sub("bd-rate", "Bjontegaard delta rate between two RD curves", bd_cmd);
    sub("init-model", "Write seeded toy ViT weights", init_cmd);

    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        // Splice config-file values in right after the subcommand name.
        const auto cfg_it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
            return a == "--config" || a.rfind("--config=", 0) == 0;
        });
        if (cfg_it != args.end() && !args.empty()) {
            const std::string path = *cfg_it == "--config" ? (cfg_it + 1 != args.end() ? *(cfg_it + 1) : "")
                                                           : cfg_it->substr(9);
            if (path.empty()) throw UsageError("--config needs a file path");
            CLI::App* target = app.get_subcommand_no_throw(args[0]);
            if (target == nullptr) throw UsageError("--config must follow a subcommand");
            const auto extra = config_tokens(target, path, args);
            args.insert(args.begin() + 1, extra.begin(), extra.end());
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 1);
    } catch (const UsageError& e) {
        return fail("usage", e.what(), 1);
    } catch (const attncodec::Error& e) {
        return fail(std::string(to_string(e.kind())), e.what(), 2);
    }

    try {
        for (auto& [s, run] : runners)
            if (s->parsed()) return run();
        return fail("usage", "no subcommand", 1);
    } catch (const UsageError& e) {
        return fail("usage", e.what(), 1);
    } catch (const attncodec::Error& e) {
        return fail(std::string(to_string(e.kind())), e.what(), 2);
    } catch (const fs::filesystem_error& e) {
        return fail("io", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 2);
    }
}
