#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mvdesc/pipeline.hpp"
#include "synthetic.hpp"

using namespace mvdesc;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

const char* kToyConfig =
    "seed = 5\n"
    "view.n_directions = 20\n"
    "view.n_medoids = 2\n"
    "view.radii = 0.4, 0.7\n"
    "view.n_inplane = 2\n"
    "view.resolution = 32\n"
    "network.input_resolution = 32\n"
    "network.convs = 4x5x2\n"
    "network.pools = 2x2\n"
    "network.view_descriptor_dim = 16\n"
    "network.output_dim = 16\n"
    "registration.points = 200\n"
    "registration.max_iters = 5\n"
    "train.iterations = 2\n"
    "train.positives_per_batch = 4\n"
    "train.negatives_per_batch = 4\n"
    "sample_points = 64\n"
    "eval.dense_samples = 8\n"
    "eval.max_rank = 5\n"
    "eval.candidates = features\n"
    "eval.thresholds = 0.1, 0.5, 1.0\n";

// writes three winged shapes plus one legged shape and the annotation files;
// returns the manifest path
fs::path write_toy_dataset(const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream man(dir / "manifest.txt");
    man << "# toy dataset\nseed 5\n";
    std::ofstream feats(dir / "features.txt");
    for (int i = 0; i < 3; ++i) {
        synth::ToyShape shape = synth::make_winged(100 + i);
        std::string id = "w" + std::to_string(i);
        synth::write_obj(shape.mesh, (dir / (id + ".obj")).string());
        synth::write_labels(shape.mesh, (dir / (id + ".labels")).string());
        man << "shape " << id << " winged " << id << ".obj " << id << ".labels\n";
        for (const auto& f : shape.features)
            feats << id << ' ' << f.id << ' ' << f.position.x() << ' ' << f.position.y() << ' '
                  << f.position.z() << '\n';
    }
    synth::ToyShape leg = synth::make_legged(200);
    synth::write_obj(leg.mesh, (dir / "l0.obj").string());
    synth::write_labels(leg.mesh, (dir / "l0.labels").string());
    man << "shape l0 legged l0.obj l0.labels\n";
    std::ofstream(dir / "symmetry.txt") << "0 1\n";
    return dir / "manifest.txt";
}

}  // namespace

TEST_CASE("derive_seed separates stages, items and global seeds") {
    std::uint64_t a = derive_seed(1, "train");
    CHECK(a == derive_seed(1, "train"));
    CHECK(a != derive_seed(2, "train"));
    CHECK(a != derive_seed(1, "views"));
    CHECK(derive_seed(1, "views", "shape1") != derive_seed(1, "views", "shape2"));
    CHECK(derive_seed(1, "views", "shape1") != derive_seed(1, "views"));
    // concatenation must not collide: ("ab","c") vs ("a","bc")
    CHECK(derive_seed(1, "ab", "c") != derive_seed(1, "a", "bc"));
}

TEST_CASE("config text parses every section and rejects unknown keys") {
    PipelineConfig c = parse_config_text(kToyConfig);
    CHECK(c.seed == 5);
    CHECK(c.view.n_directions == 20);
    CHECK(c.view.n_medoids == 2);
    CHECK(c.view.radii == std::vector<double>{0.4, 0.7});
    CHECK(c.view.n_inplane == 2);
    CHECK(c.view.resolution == 32);
    REQUIRE(c.network.convs.size() == 1);
    CHECK(c.network.convs[0].out_channels == 4);
    CHECK(c.network.convs[0].kernel == 5);
    CHECK(c.network.convs[0].stride == 2);
    CHECK(c.network.pools[0].window == 2);
    CHECK(c.network.view_descriptor_dim == 16);
    CHECK(c.network.output_dim == 16);
    CHECK(c.registration_points == 200);
    CHECK(c.registration.max_iters == 5);
    CHECK(c.train.iterations == 2);
    CHECK(c.sample_points == 64);
    CHECK(c.eval_dense_samples == 8);
    CHECK(c.eval_max_rank == 5);
    CHECK(c.eval_candidates == CandidateSet::Features);
    CHECK(c.eval_thresholds == std::vector<double>{0.1, 0.5, 1.0});

    // defaults survive when keys are omitted
    PipelineConfig d = parse_config_text("");
    CHECK(d.view.n_directions == 150);
    CHECK(d.eval_thresholds.size() == 25);
    CHECK(d.eval_thresholds[0] == doctest::Approx(0.01));

    CHECK_THROWS_AS(parse_config_text("bogus.key = 1\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("seed 5\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("seed = banana\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("network.pooling = sum\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("eval.candidates = nearest\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("network.convs = 4x5\n"), InputError);
    CHECK_THROWS_AS(parse_config_text("view.radii = 0.5, 0.5\n"), InputError);  // validation
    CHECK_NOTHROW(parse_config_text("# just a comment\n\nseed = 1 # trailing\n"));
}

TEST_CASE("manifest round trips and resolves paths relative to the file") {
    fs::path dir = fs::temp_directory_path() / "mvdesc_test_pipeline" / "manifest";
    fs::create_directories(dir / "meshes");
    std::ofstream(dir / "m.txt") << "seed 42\n"
                                 << "# comment\n"
                                 << "shape s1 cat meshes/a.obj meshes/a.labels\n"
                                 << "shape s2 cat meshes/b.obj\n";
    Manifest m = load_manifest((dir / "m.txt").string());
    CHECK(m.seed == 42);
    REQUIRE(m.entries.size() == 2);
    CHECK(fs::path(m.entries[0].mesh_path) == dir / "meshes" / "a.obj");
    CHECK(fs::path(m.entries[0].label_path) == dir / "meshes" / "a.labels");
    CHECK(m.entries[1].label_path.empty());
    CHECK(m.find("s2").category == "cat");
    CHECK_THROWS_AS(m.find("nope"), InputError);

    save_manifest(m, (dir / "copy.txt").string());
    Manifest back = load_manifest((dir / "copy.txt").string());
    CHECK(back.seed == 42);
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].mesh_path == m.entries[0].mesh_path);

    std::ofstream(dir / "dup.txt") << "shape s1 c a.obj\nshape s1 c b.obj\n";
    CHECK_THROWS_AS(load_manifest((dir / "dup.txt").string()), InputError);
    std::ofstream(dir / "bad.txt") << "wibble 3\n";
    CHECK_THROWS_AS(load_manifest((dir / "bad.txt").string()), InputError);
    CHECK_THROWS_AS(load_manifest((dir / "missing.txt").string()), InputError);
}

TEST_CASE("shape embedder is deterministic and flags interior points") {
    TriangleMesh sphere = synth::make_sphere(24, 12);
    auto samples = area_weighted_sample(sphere, 10, 3);
    samples.push_back(samples.back());
    samples.back().position = Vec3(0, 0, 0);  // interior
    Scene scene = make_mesh_scene(sphere, samples, {});

    ViewConfig view;
    view.n_directions = 20;
    view.n_medoids = 2;
    view.radii = {0.4, 0.7};
    view.n_inplane = 2;
    view.resolution = 32;

    NetworkConfig net;
    net.input_resolution = 32;
    net.convs = {{4, 5, 2}};
    net.pools = {{2, 2}};
    net.view_descriptor_dim = 16;
    net.output_dim = 16;
    DescriptorModel model = DescriptorModel::random_init(net, 7);

    ShapeEmbedder embedder(scene, view, 11);
    PointDescriptor d1 = embedder.embed(0, model);
    PointDescriptor d2 = embedder.embed(0, model);
    CHECK(d1.values == d2.values);
    CHECK(d1.point_id == 0);
    CHECK((int)d1.values.size() == net.output_dim);
    CHECK(embedder.stack(0).size() == (std::size_t)view.views_per_point());
    CHECK_THROWS_AS(embedder.embed((std::uint32_t)samples.size() - 1, model),
                    ZeroVisibilityError);
}

TEST_CASE("pipeline commands run end to end and are reproducible") {
    fs::path root = fs::temp_directory_path() / "mvdesc_test_pipeline" / "e2e";
    fs::remove_all(root);
    fs::path manifest_path = write_toy_dataset(root / "data");
    Manifest manifest = load_manifest(manifest_path.string());
    PipelineConfig config = parse_config_text(kToyConfig);

    // sample
    fs::path samples_dir = root / "samples";
    cmd_sample(manifest, config, samples_dir.string());
    for (const auto& e : manifest.entries) {
        fs::path xyz = samples_dir / (e.shape_id + ".xyz");
        REQUIRE(fs::exists(xyz));
        CHECK(load_xyz(xyz.string()).size() == (std::size_t)config.sample_points);
    }

    // register all within-category pairs
    fs::path reg_dir = root / "registered";
    auto stats = cmd_register(manifest, config, {}, reg_dir.string());
    bool found_winged = false;
    for (const auto& s : stats)
        if (s.category == "winged") {
            found_winged = true;
            CHECK(s.shapes == 3);
            CHECK(s.pairs == 3);
            CHECK(s.correspondences > 0);
        }
    CHECK(found_winged);
    CorrespondenceSet corr = load_correspondences_binary((reg_dir / "w0__w1.mvdc").string());
    CHECK_FALSE(corr.empty());
    for (const auto& c : corr) {
        CHECK(c.index_a < (std::uint32_t)config.registration_points);
        CHECK(c.index_b < (std::uint32_t)config.registration_points);
    }
    // correspondence indices refer to the regenerated registration samples
    LabeledPointSet reg_pts = registration_point_set(manifest, manifest.find("w0"), config);
    CHECK(reg_pts.points.size() == (std::size_t)config.registration_points);
    LabeledPointSet again = registration_point_set(manifest, manifest.find("w0"), config);
    CHECK(reg_pts.points == again.points);

    CHECK_THROWS_AS(cmd_register(manifest, config, {{"w0", "l0"}}, reg_dir.string()), InputError);

    // train
    fs::path model_path = root / "model.mvdm";
    fs::path loss_path = root / "loss.csv";
    cmd_train(manifest, config, reg_dir.string(), model_path.string(), loss_path.string());
    DescriptorModel model = load_model(model_path.string());
    CHECK(model.config.output_dim == 16);
    CHECK(line_count(loss_path) == (std::size_t)config.train.iterations + 1);  // header + rows
    CHECK_THROWS_AS(cmd_train(manifest, config, (root / "nowhere").string(), model_path.string(),
                              loss_path.string()),
                    InputError);

    // embed (twice; byte-identical)
    EmbedRequest req;
    req.n_samples = config.eval_dense_samples;
    req.features_path = (root / "data" / "features.txt").string();
    fs::path emb1 = root / "desc1", emb2 = root / "desc2";
    cmd_embed(manifest, config, model_path.string(), req, emb1.string());
    cmd_embed(manifest, config, model_path.string(), req, emb2.string());
    for (const auto& e : manifest.entries) {
        REQUIRE(fs::exists(emb1 / (e.shape_id + ".desc")));
        REQUIRE(fs::exists(emb1 / (e.shape_id + ".xyz")));
        CHECK(read_file(emb1 / (e.shape_id + ".desc")) == read_file(emb2 / (e.shape_id + ".desc")));
    }
    REQUIRE(fs::exists(emb1 / "w0_features.desc"));
    REQUIRE(fs::exists(emb1 / "w0_features.txt"));
    auto fdesc = load_descriptors((emb1 / "w0_features.desc").string());
    CHECK(fdesc.size() == 5);  // all five annotated points visible on the toy shape
    CHECK(line_count(emb1 / "w0_features.txt") == fdesc.size());

    // evaluate (twice; byte-identical curves)
    EvaluateRequest ev;
    ev.descriptor_dir = emb1.string();
    ev.features_path = (root / "data" / "features.txt").string();
    ev.symmetry_path = (root / "data" / "symmetry.txt").string();
    fs::path eval1 = root / "eval1", eval2 = root / "eval2";
    cmd_evaluate(manifest, config, ev, eval1.string());
    cmd_evaluate(manifest, config, ev, eval2.string());
    for (const char* name : {"cmc.csv", "accuracy.csv", "cmc_symmetric.csv",
                             "accuracy_symmetric.csv"}) {
        REQUIRE(fs::exists(eval1 / name));
        CHECK(read_file(eval1 / name) == read_file(eval2 / name));
    }
    std::ifstream cmc(eval1 / "cmc.csv");
    std::string header;
    std::getline(cmc, header);
    CHECK(header.find("metric=cmc") != std::string::npos);

    EvaluateRequest bad = ev;
    bad.symmetry_path.reset();
    bad.require_symmetric = true;
    CHECK_THROWS_AS(cmd_evaluate(manifest, config, bad, eval1.string()), InputError);

    // match
    fs::path match_prefix = root / "match";
    cmd_match((root / "data" / "w0.obj").string(), (root / "data" / "w1.obj").string(),
              model_path.string(), config, match_prefix.string());
    fs::path ma = match_prefix.string() + "_a.txt", mb = match_prefix.string() + "_b.txt";
    REQUIRE(fs::exists(ma));
    REQUIRE(fs::exists(mb));
    CHECK(line_count(ma) > 0);
    CHECK(line_count(mb) > 0);
    std::ifstream min(ma);
    double x, y, z, r, g, b;
    REQUIRE((min >> x >> y >> z >> r >> g >> b));
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
}
