#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mvdesc/evaluation.hpp"

using namespace mvdesc;
namespace fs = std::filesystem;

namespace {

PointDescriptor pd(std::initializer_list<double> values) {
    PointDescriptor d;
    d.values = values;
    return d;
}

// two shapes with two features each; descriptor layout hand-picked so every
// rank is known by construction
std::vector<ShapeDescriptors> hand_shapes() {
    std::vector<ShapeDescriptors> shapes(2);
    shapes[0].shape_id = "a";
    shapes[1].shape_id = "b";

    // feature 1 of "a" queries "b": distances to b's candidates are
    //   dense0: 1, dense1: 4, feature1: 2, feature2: 3  -> rank of feature1 = 2
    // feature 2 of "a": dense0: 5, dense1: 3, feature1: 4, feature2: 1 -> rank 1
    shapes[0].features = {pd({0.0}), pd({10.0})};
    shapes[0].feature_ids = {1, 2};
    shapes[0].feature_positions = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    shapes[0].dense = {pd({-7.0}), pd({-8.0})};
    shapes[0].dense_positions = {Vec3(0, 1, 0), Vec3(0, 2, 0)};

    shapes[1].features = {pd({2.0}), pd({9.0})};
    shapes[1].feature_ids = {1, 2};
    shapes[1].feature_positions = {Vec3(0, 0, 1), Vec3(1, 0, 1)};
    shapes[1].dense = {pd({1.0}), pd({-4.0})};
    shapes[1].dense_positions = {Vec3(0.1, 0, 1), Vec3(5, 5, 5)};
    return shapes;
}

}  // namespace

TEST_CASE("feature set validation requires unique ids and involutive symmetry") {
    FeaturePointSet set;
    set.shapes["a"] = {{1, Vec3(0, 0, 0)}, {2, Vec3(1, 0, 0)}};
    CHECK_NOTHROW(set.validate());
    set.shapes["a"].push_back({1, Vec3(2, 0, 0)});
    CHECK_THROWS_AS(set.validate(), InputError);
    set.shapes["a"].pop_back();
    set.symmetry = {{1, 2}};  // missing the reverse entry
    CHECK_THROWS_AS(set.validate(), InputError);
    set.symmetry = {{1, 2}, {2, 1}};
    CHECK_NOTHROW(set.validate());
}

TEST_CASE("cmc curve matches hand-computed ranks") {
    auto shapes = hand_shapes();
    FeaturePointSet feats;
    feats.shapes["a"] = {{1, shapes[0].feature_positions[0]}, {2, shapes[0].feature_positions[1]}};
    feats.shapes["b"] = {{1, shapes[1].feature_positions[0]}, {2, shapes[1].feature_positions[1]}};

    EvalOptions opt;
    opt.max_rank = 4;
    opt.candidates = CandidateSet::Both;

    // queries a->b: feature 1 rank 2, feature 2 rank 1
    // queries b->a: feature 1 of b (2.0) against a's candidates
    //   dense: 9, 10; features: 2, 8 -> rank 1
    //   feature 2 of b (9.0): dense 16, 17; features 9, 1 -> rank 1
    EvalCurve curve = cmc_curve(shapes, feats, opt);
    REQUIRE(curve.x.size() == 4);
    CHECK(curve.metric == "cmc");
    CHECK_FALSE(curve.symmetric);
    CHECK(curve.y[0] == doctest::Approx(3.0 / 4.0));
    CHECK(curve.y[1] == doctest::Approx(1.0));
    CHECK(curve.y[2] == doctest::Approx(1.0));
    CHECK(curve.y[3] == doctest::Approx(1.0));

    // features-only candidates: the a->b feature-1 query now ranks its target
    // behind feature 2? distances: feature1=2, feature2=3 -> rank 1; all rank 1
    EvalOptions fo = opt;
    fo.candidates = CandidateSet::Features;
    EvalCurve fcurve = cmc_curve(shapes, feats, fo);
    CHECK(fcurve.y[0] == doctest::Approx(1.0));

    // symmetric scoring takes the better of feature and twin ranks
    FeaturePointSet sym = feats;
    sym.symmetry = {{1, 2}, {2, 1}};
    EvalOptions so = opt;
    so.allow_symmetry = true;
    EvalCurve scurve = cmc_curve(shapes, sym, so);
    CHECK(scurve.symmetric);
    // a->b feature 1: own rank 2, twin (feature 2, dist 9... ) rank of feature2
    // candidate under the same query: |0-9|=9 -> rank 4; min = 2. Others rank 1.
    CHECK(scurve.y[0] == doctest::Approx(3.0 / 4.0));
    CHECK(scurve.y[1] == doctest::Approx(1.0));

    CHECK_THROWS_AS(cmc_curve({shapes[0]}, feats, opt), InputError);
}

TEST_CASE("cmc skips queries whose feature is absent on the target") {
    auto shapes = hand_shapes();
    // remove feature 2 from shape b: only feature 1 queries survive in a->b
    shapes[1].features.pop_back();
    shapes[1].feature_ids.pop_back();
    shapes[1].feature_positions.pop_back();

    FeaturePointSet feats;
    feats.shapes["a"] = {{1, shapes[0].feature_positions[0]}, {2, shapes[0].feature_positions[1]}};
    feats.shapes["b"] = {{1, shapes[1].feature_positions[0]}};

    EvalOptions opt;
    opt.max_rank = 4;
    EvalCurve curve = cmc_curve(shapes, feats, opt);
    // 3 queries total: a->b feature 1 (rank 2), b->a feature 1 (rank 1),
    // and... b has only feature 1. a->b feature 2 skipped.
    CHECK(curve.y[0] == doctest::Approx(1.0 / 2.0));
    CHECK(curve.y[1] == doctest::Approx(1.0));
}

TEST_CASE("correspondence accuracy counts errors under each threshold") {
    auto shapes = hand_shapes();
    FeaturePointSet feats;
    feats.shapes["a"] = {{1, shapes[0].feature_positions[0]}, {2, shapes[0].feature_positions[1]}};
    feats.shapes["b"] = {{1, shapes[1].feature_positions[0]}, {2, shapes[1].feature_positions[1]}};

    EvalOptions opt;
    opt.candidates = CandidateSet::Both;
    opt.thresholds = {0.05, 0.2, 10.0};
    // nearest candidates in descriptor space:
    //  a(f1)->b: dense0 (dist 1) at (0.1,0,1); gt (0,0,1) -> error 0.1
    //  a(f2)->b: feature2 (dist 1) -> error 0
    //  b(f1)->a: feature1 -> 0; b(f2)->a: feature2 -> 0
    EvalCurve curve = correspondence_accuracy(shapes, feats, opt);
    CHECK(curve.metric == "correspondence_accuracy");
    CHECK(curve.normalization == "unit bounding-sphere radius");
    CHECK(curve.y[0] == doctest::Approx(3.0 / 4.0));
    CHECK(curve.y[1] == doctest::Approx(1.0));
    CHECK(curve.y[2] == doctest::Approx(1.0));
    // accuracy is non-decreasing in the threshold
    for (std::size_t i = 1; i < curve.y.size(); ++i) CHECK(curve.y[i] >= curve.y[i - 1]);

    EvalOptions empty = opt;
    empty.thresholds = {};
    CHECK_THROWS_AS(correspondence_accuracy(shapes, feats, empty), InputError);
}

TEST_CASE("nearest_match breaks ties by lower index") {
    std::vector<PointDescriptor> src = {pd({0.0}), pd({5.0})};
    std::vector<PointDescriptor> tgt = {pd({1.0}), pd({-1.0}), pd({5.0})};
    auto m = nearest_match(src, tgt);
    CHECK(m[0] == 0);  // distances 1,1,5: tie broken toward index 0
    CHECK(m[1] == 2);
    CHECK_THROWS_AS(nearest_match({}, tgt), InputError);
    CHECK_THROWS_AS(nearest_match(src, {}), InputError);
}

TEST_CASE("dense match colors transfer through descriptor matches") {
    std::vector<PointDescriptor> da = {pd({0.0}), pd({1.0}), pd({2.0})};
    std::vector<Vec3> pa = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 2, 2)};
    std::vector<PointDescriptor> db = {pd({1.9}), pd({0.1})};
    std::vector<Vec3> pb = {Vec3(7, 7, 7), Vec3(8, 8, 8)};
    std::vector<ColoredPoint> ca, cb;
    dense_match_colors(da, pa, db, pb, ca, cb);
    REQUIRE(ca.size() == 3);
    REQUIRE(cb.size() == 2);
    // colors are the normalized positions of shape a
    CHECK((ca[0].rgb - Vec3(0, 0, 0)).norm() < 1e-12);
    CHECK((ca[2].rgb - Vec3(1, 1, 1)).norm() < 1e-12);
    // b0 matches a2 (|1.9-2| smallest), b1 matches a0
    CHECK((cb[0].rgb - ca[2].rgb).norm() < 1e-12);
    CHECK((cb[1].rgb - ca[0].rgb).norm() < 1e-12);
    CHECK(cb[0].position == pb[0]);
    std::vector<Vec3> short_pos = {Vec3(0, 0, 0)};
    CHECK_THROWS_AS(dense_match_colors(da, short_pos, db, pb, ca, cb), InputError);
}

TEST_CASE("feature and symmetry files round trip") {
    FeaturePointSet set;
    set.shapes["plane"] = {{3, Vec3(0.5, -1.0, 2.0)}, {4, Vec3(1, 2, 3)}};
    set.shapes["bird"] = {{3, Vec3(9, 8, 7)}};

    fs::path dir = fs::temp_directory_path() / "mvdesc_test_evaluation";
    fs::create_directories(dir);
    auto fp = dir / "features.txt";
    save_features(set, fp.string());
    FeaturePointSet back = load_features(fp.string());
    REQUIRE(back.shapes.size() == 2);
    REQUIRE(back.shapes["plane"].size() == 2);
    CHECK(back.shapes["plane"][0].feature_id == 3);
    CHECK((back.shapes["plane"][0].position - Vec3(0.5, -1.0, 2.0)).norm() < 1e-7);
    CHECK(back.shapes["bird"][0].feature_id == 3);

    auto sp = dir / "symmetry.txt";
    std::ofstream(sp) << "3 4\n";
    load_symmetry(back, sp.string());
    CHECK(back.symmetry.at(3) == 4);
    CHECK(back.symmetry.at(4) == 3);

    CHECK_THROWS_AS(load_features((dir / "missing.txt").string()), InputError);
    std::ofstream(fp) << "plane 1 0.0 bad\n";
    CHECK_THROWS_AS(load_features(fp.string()), InputError);
}

TEST_CASE("curve files carry metric metadata") {
    EvalCurve curve;
    curve.metric = "cmc";
    curve.symmetric = true;
    curve.x = {1, 2};
    curve.y = {0.5, 1.0};
    fs::path dir = fs::temp_directory_path() / "mvdesc_test_evaluation";
    fs::create_directories(dir);
    auto cp = dir / "curve.csv";
    save_curve(curve, cp.string());
    std::ifstream in(cp);
    std::string l1, l2, l3;
    std::getline(in, l1);
    std::getline(in, l2);
    std::getline(in, l3);
    CHECK(l1 == "# metric=cmc symmetric=1");
    CHECK(l2 == "x,y");
    CHECK(l3 == "1,0.5");

    std::vector<ColoredPoint> pts = {{Vec3(1, 2, 3), Vec3(0.5, 0, 1)}};
    auto pp = dir / "colored.txt";
    save_colored_points(pts, pp.string());
    std::ifstream pin(pp);
    std::string line;
    std::getline(pin, line);
    CHECK(line == "1 2 3 0.5 0 1");
}
