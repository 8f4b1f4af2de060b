#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "mvdesc/parallel.hpp"
#include "mvdesc/pipeline.hpp"

using namespace mvdesc;

namespace {

struct Common {
    std::string manifest_path;
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_manifest = true) {
    if (needs_manifest)
        cmd->add_option("--manifest", c.manifest_path, "shape manifest file")->required();
    cmd->add_option("--config", c.config_path, "pipeline config file");
    cmd->add_option("--seed", c.seed, "global seed (overrides config and manifest)")
        ->each([&c](const std::string&) { c.seed_set = true; });
    cmd->add_option("--workers", c.workers, "worker threads (0 = runtime default)");
}

PipelineConfig make_config(const Common& c, const Manifest* manifest) {
    PipelineConfig config;
    if (!c.config_path.empty()) config = load_config(c.config_path);
    if (manifest && manifest->seed != 0 && config.seed == 0) config.seed = manifest->seed;
    if (c.seed_set) config.seed = c.seed;
    if (c.workers > 0) config.workers = c.workers;
    set_workers(config.workers);
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view local shape descriptor pipeline"};
    app.require_subcommand(1);

    Common c;
    std::string out_dir = "out";
    std::string model_path = "model.mvdm";
    std::string loss_path;
    std::string corr_dir;
    std::string features_path, symmetry_path, descriptor_dir;
    std::string shape_a, shape_b, out_prefix = "match";
    std::vector<std::string> pair_args;
    int n_samples = 256;
    bool require_symmetric = false;

    auto* sample = app.add_subcommand("sample", "surface-sample each shape to a point cloud");
    add_common(sample, c);
    sample->add_option("--out", out_dir, "output directory");

    auto* reg = app.add_subcommand("register", "register shape pairs and emit correspondences");
    add_common(reg, c);
    reg->add_option("--out", out_dir, "output directory");
    reg->add_option("--pair", pair_args, "explicit 'idA:idB' pair (repeatable)");

    auto* train = app.add_subcommand("train", "train the descriptor network");
    add_common(train, c);
    train->add_option("--correspondences", corr_dir, "directory of correspondence files")
        ->required();
    train->add_option("--model", model_path, "output model file");
    train->add_option("--loss", loss_path, "output per-iteration loss CSV");

    auto* embed = app.add_subcommand("embed", "compute descriptors for each shape");
    add_common(embed, c);
    embed->add_option("--model", model_path, "trained model file")->required();
    embed->add_option("--samples", n_samples, "dense description points per shape");
    embed->add_option("--features", features_path, "annotated feature point file");
    embed->add_option("--out", out_dir, "output directory");

    auto* eval = app.add_subcommand("evaluate", "score descriptors against feature annotations");
    add_common(eval, c);
    eval->add_option("--descriptors", descriptor_dir, "directory written by embed")->required();
    eval->add_option("--features", features_path, "annotated feature point file")->required();
    eval->add_option("--symmetry", symmetry_path, "feature symmetry map file");
    eval->add_flag("--require-symmetric", require_symmetric,
                   "fail when no symmetry map is available");
    eval->add_option("--out", out_dir, "output directory");

    auto* match = app.add_subcommand("match", "densely match two shapes and color-code the result");
    add_common(match, c, /*needs_manifest=*/false);
    match->add_option("shape_a", shape_a, "first shape (.obj or .xyz)")->required();
    match->add_option("shape_b", shape_b, "second shape (.obj or .xyz)")->required();
    match->add_option("--model", model_path, "trained model file")->required();
    match->add_option("--out", out_prefix, "output file prefix");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sample->parsed()) {
            Manifest m = load_manifest(c.manifest_path);
            cmd_sample(m, make_config(c, &m), out_dir);
        } else if (reg->parsed()) {
            Manifest m = load_manifest(c.manifest_path);
            std::vector<std::pair<std::string, std::string>> pairs;
            for (const auto& p : pair_args) {
                auto colon = p.find(':');
                if (colon == std::string::npos)
                    throw InputError("--pair expects 'idA:idB', got '" + p + "'");
                pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
            }
            auto stats = cmd_register(m, make_config(c, &m), pairs, out_dir);
            for (const auto& s : stats)
                std::cout << s.category << ": " << s.shapes << " shapes, " << s.pairs
                          << " pairs, " << s.correspondences << " correspondences\n";
        } else if (train->parsed()) {
            Manifest m = load_manifest(c.manifest_path);
            cmd_train(m, make_config(c, &m), corr_dir, model_path, loss_path);
        } else if (embed->parsed()) {
            Manifest m = load_manifest(c.manifest_path);
            EmbedRequest req;
            req.n_samples = n_samples;
            if (!features_path.empty()) req.features_path = features_path;
            cmd_embed(m, make_config(c, &m), model_path, req, out_dir);
        } else if (eval->parsed()) {
            Manifest m = load_manifest(c.manifest_path);
            EvaluateRequest req;
            req.descriptor_dir = descriptor_dir;
            req.features_path = features_path;
            if (!symmetry_path.empty()) req.symmetry_path = symmetry_path;
            req.require_symmetric = require_symmetric;
            cmd_evaluate(m, make_config(c, &m), req, out_dir);
        } else if (match->parsed()) {
            cmd_match(shape_a, shape_b, model_path, make_config(c, nullptr), out_prefix);
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
