#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mvdesc/registration.hpp"
#include "synthetic.hpp"

using namespace mvdesc;
namespace fs = std::filesystem;

namespace {

std::vector<Vec3> box_grid(int nx, int ny, int nz, const Vec3& half) {
    std::vector<Vec3> pts;
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nz; ++k)
                pts.push_back(Vec3(half.x() * (2.0 * i / (nx - 1) - 1.0),
                                   half.y() * (2.0 * j / (ny - 1) - 1.0),
                                   half.z() * (2.0 * k / (nz - 1) - 1.0)));
    return pts;
}

Vec3 bbox_diag(const std::vector<Vec3>& pts) {
    Vec3 lo = pts[0], hi = pts[0];
    for (const auto& p : pts) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    return hi - lo;
}

// low-frequency smooth warp with displacement bounded by `amp`
Vec3 smooth_warp(const Vec3& p, double amp) {
    return p + amp * Vec3(std::sin(1.3 * p.y() + 0.2), std::cos(1.1 * p.z() - 0.4),
                          std::sin(0.9 * p.x() + 1.0)) /
                   std::sqrt(3.0);
}

}  // namespace

TEST_CASE("affine init maps one box onto another") {
    std::mt19937_64 rng(2);
    std::vector<Vec3> pa = box_grid(7, 5, 3, Vec3(2.0, 1.2, 0.6));
    Mat3 r = synth::random_rotation(rng);
    std::vector<Vec3> pb;
    // per-axis scales chosen so the extent ordering (and hence the OBB axis
    // ordering) matches between the two parts
    for (const auto& p : pa) pb.push_back(r * Vec3(2.0 * p.x(), 1.5 * p.y(), 0.5 * p.z()) + Vec3(3, 1, -2));
    AffineTransform t = affine_init(pa, pb);
    // OBB frames coincide, so the composed map should land on pb pointwise up
    // to axis sign ambiguity; compare the two point sets as sets
    double worst = 0.0;
    for (const auto& p : pa) {
        Vec3 q = t.apply(p);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : pb) best = std::min(best, (q - b).norm());
        worst = std::max(worst, best);
    }
    CHECK(worst < 1e-6);
    CHECK_THROWS_AS(affine_init({}, pb), InputError);
}

TEST_CASE("solve_offsets matches the closed-form two-point solution") {
    // two points per part, mutual 1-NN graph: per axis the system is
    // [[1+2w, -2w], [-2w, 1+2w]] x = rhs
    std::vector<Vec3> a = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    std::vector<Vec3> b = {Vec3(0.2, 0.5, -0.1), Vec3(1.4, -0.3, 0.2)};
    std::vector<std::uint32_t> mab = {0, 1}, mba = {0, 1};
    NeighborGraph ga, gb;
    ga.k = gb.k = 1;
    ga.neighbors = {{1}, {0}};
    gb.neighbors = {{1}, {0}};
    const double w = 0.7;
    DeformationField oa, ob;
    EnergyReport rep;
    solve_offsets(a, b, mab, mba, ga, gb, w, oa, ob, rep);

    Eigen::Matrix2d sys;
    sys << 1 + 2 * w, -2 * w, -2 * w, 1 + 2 * w;
    for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector2d rhs(b[0][axis] - a[0][axis], b[1][axis] - a[1][axis]);
        Eigen::Vector2d x = sys.inverse() * rhs;
        CHECK(oa[0][axis] == doctest::Approx(x[0]).epsilon(1e-6));
        CHECK(oa[1][axis] == doctest::Approx(x[1]).epsilon(1e-6));
    }
    // the reported energy matches direct evaluation of the objective
    double data = 0.0;
    for (int i = 0; i < 2; ++i) data += (a[i] + oa[i] - b[i]).squaredNorm();
    CHECK(rep.data_a_to_b == doctest::Approx(data).epsilon(1e-9));
    double smooth = 2.0 * w * (oa[0] - oa[1]).squaredNorm();  // both directed edges
    CHECK(rep.smooth_a == doctest::Approx(smooth).epsilon(1e-9));
}

TEST_CASE("identical point sets register with zero deformation") {
    std::vector<Vec3> pts = box_grid(5, 5, 5, Vec3(1, 1, 1));
    IcpResult res = icp_register(pts, pts);
    REQUIRE_FALSE(res.energy.empty());
    CHECK(res.energy.back().total() < 1e-12);
    CHECK(res.converged);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(res.offsets_a[i].norm() < 1e-7);
        CHECK(res.matches_ab[i] == i);
        CHECK(res.matches_ba[i] == i);
    }
}

TEST_CASE("icp energy is non-increasing on randomly warped parts") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<Vec3> a = box_grid(6, 6, 3, Vec3(1.0 + 0.2 * trial, 1.0, 0.4));
        std::vector<Vec3> b;
        double amp = 0.02 + 0.02 * (trial % 4);
        for (const auto& p : a) b.push_back(smooth_warp(p, amp));
        RegistrationConfig cfg;
        cfg.max_iters = 20;
        cfg.tol_fraction = 0.0;  // run all iterations
        IcpResult res = icp_register(a, b, cfg);
        for (std::size_t i = 1; i < res.energy.size(); ++i) {
            double prev = res.energy[i - 1].total();
            CHECK(res.energy[i].total() <= prev + 1e-9 * std::max(1.0, prev));
        }
    }
}

TEST_CASE("icp recovers small smooth warps") {
    std::vector<Vec3> a = box_grid(8, 8, 4, Vec3(1.5, 1.5, 0.5));
    double diag = bbox_diag(a).norm();
    std::vector<Vec3> b;
    for (const auto& p : a) b.push_back(smooth_warp(p, 0.04 * diag));
    RegistrationConfig cfg;
    cfg.max_iters = 40;
    IcpResult res = icp_register(a, b, cfg);
    std::size_t good = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if ((b[res.matches_ab[i]] - b[i]).norm() <= 0.02 * diag) ++good;
    CHECK((double)good / (double)a.size() >= 0.95);
}

TEST_CASE("pair correspondences respect part labels") {
    LabeledPointSet sa, sb;
    sa.shape_id = "a";
    sb.shape_id = "b";
    auto add_part = [](LabeledPointSet& s, const Vec3& center, int label, int n, double scale) {
        auto pts = box_grid(n, n, 2, Vec3(scale, scale, 0.3 * scale));
        for (const auto& p : pts) {
            s.points.push_back(p + center);
            s.labels.push_back(label);
        }
    };
    add_part(sa, Vec3(0, 0, 0), 0, 4, 1.0);
    add_part(sa, Vec3(4, 0, 0), 1, 3, 0.5);
    add_part(sb, Vec3(0, 0, 1), 0, 4, 1.1);
    add_part(sb, Vec3(4, 0, 1), 1, 3, 0.6);
    add_part(sb, Vec3(-4, 0, 1), 7, 3, 0.6);  // label with no counterpart in a

    CorrespondenceSet set = generate_pair_correspondences(sa, sb);
    CHECK_FALSE(set.empty());
    for (const auto& c : set) {
        CHECK(c.shape_a == "a");
        CHECK(c.shape_b == "b");
        REQUIRE(c.index_a < sa.points.size());
        REQUIRE(c.index_b < sb.points.size());
        CHECK(sa.labels[c.index_a] == sb.labels[c.index_b]);
    }
    // every point of both shapes with a shared label appears at least once
    std::vector<bool> hit_a(sa.points.size(), false), hit_b(sb.points.size(), false);
    for (const auto& c : set) {
        hit_a[c.index_a] = true;
        hit_b[c.index_b] = true;
    }
    for (std::size_t i = 0; i < sa.points.size(); ++i) CHECK(hit_a[i]);
    for (std::size_t i = 0; i < sb.points.size(); ++i)
        if (sb.labels[i] != 7) CHECK(hit_b[i]);

    LabeledPointSet disjoint = sb;
    for (auto& l : disjoint.labels) l = 99;
    CHECK_THROWS_AS(generate_pair_correspondences(sa, disjoint), InputError);

    LabeledPointSet bad = sa;
    bad.labels.pop_back();
    CHECK_THROWS_AS(generate_pair_correspondences(bad, sb), InputError);
}

TEST_CASE("correspondence files round trip in both formats") {
    CorrespondenceSet set = {{"alpha", "beta", 3, 9}, {"alpha", "beta", 0, 1},
                             {"beta", "gamma", 7, 7}};
    fs::path dir = fs::temp_directory_path() / "mvdesc_test_registration";
    fs::create_directories(dir);

    auto tp = dir / "c.txt";
    save_correspondences_text(set, tp.string());
    CorrespondenceSet t = load_correspondences_text(tp.string());
    REQUIRE(t.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(t[i].shape_a == set[i].shape_a);
        CHECK(t[i].index_a == set[i].index_a);
        CHECK(t[i].shape_b == set[i].shape_b);
        CHECK(t[i].index_b == set[i].index_b);
    }

    auto bp = dir / "c.mvdc";
    save_correspondences_binary(set, bp.string());
    CorrespondenceSet b = load_correspondences_binary(bp.string());
    REQUIRE(b.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        CHECK(b[i].shape_a == set[i].shape_a);
        CHECK(b[i].index_a == set[i].index_a);
        CHECK(b[i].shape_b == set[i].shape_b);
        CHECK(b[i].index_b == set[i].index_b);
    }
    CHECK_THROWS_AS(load_correspondences_binary(tp.string()), InputError);
    CHECK_THROWS_AS(load_correspondences_binary((dir / "missing.mvdc").string()), InputError);
}
