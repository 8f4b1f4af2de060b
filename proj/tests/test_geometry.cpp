#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mvdesc/geometry.hpp"
#include "synthetic.hpp"

using namespace mvdesc;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "mvdesc_test_geometry";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("obj loader handles quads, attribute indices and negative indices") {
    auto p = temp_file("quad.obj");
    write_text(p,
               "# comment\n"
               "v 0 0 0\n"
               "v 1 0 0\n"
               "v 1 1 0\n"
               "v 0 1 0\n"
               "vt 0 0\n"
               "vn 0 0 1\n"
               "f 1/1/1 2/1/1 3/1/1 4/1/1\n"
               "f -4 -3 -2\n");
    TriangleMesh m = load_mesh(p.string());
    REQUIRE(m.vertices.size() == 4);
    // quad fans into 2 triangles, plus the negative-index triangle
    REQUIRE(m.faces.size() == 3);
    CHECK(m.faces[0] == std::array<std::uint32_t, 3>{0, 1, 2});
    CHECK(m.faces[1] == std::array<std::uint32_t, 3>{0, 2, 3});
    CHECK(m.faces[2] == std::array<std::uint32_t, 3>{0, 1, 2});
    CHECK_FALSE(m.has_labels());
}

TEST_CASE("obj loader reports malformed input with line numbers") {
    auto p = temp_file("bad.obj");
    write_text(p, "v 0 0 0\nv 1 0 0\nf 1 2 7\n");
    CHECK_THROWS_WITH_AS(load_mesh(p.string()), doctest::Contains(":3"), InputError);

    write_text(p, "v 0 0 zzz\n");
    CHECK_THROWS_AS(load_mesh(p.string()), InputError);

    write_text(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n");
    CHECK_THROWS_AS(load_mesh(p.string()), InputError);

    CHECK_THROWS_AS(load_mesh("/nonexistent/mesh.obj"), InputError);
}

TEST_CASE("degenerate faces are flagged but kept") {
    auto p = temp_file("degen.obj");
    write_text(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\n");
    TriangleMesh m = load_mesh(p.string());
    REQUIRE(m.faces.size() == 2);
    CHECK_FALSE(m.degenerate_face[0]);
    CHECK(m.degenerate_face[1]);
    CHECK(m.face_normal(1) == Vec3::Zero());
}

TEST_CASE("face label sidecar must match the face count") {
    auto p = temp_file("tri.obj");
    write_text(p, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    TriangleMesh m = load_mesh(p.string());
    auto lp = temp_file("tri.labels");
    write_text(lp, "7\n");
    load_face_labels(m, lp.string());
    CHECK(m.face_labels == std::vector<int>{7});
    write_text(lp, "1\n2\n");
    CHECK_THROWS_AS(load_face_labels(m, lp.string()), InputError);
}

TEST_CASE("xyz round trip preserves positions and optional normals") {
    std::vector<CloudPoint> cloud;
    cloud.push_back({Vec3(0.5, -1.25, 3.0), Vec3(0, 0, 1)});
    cloud.push_back({Vec3(1, 2, 3), std::nullopt});
    auto p = temp_file("cloud.xyz");
    save_xyz(cloud, p.string());
    auto back = load_xyz(p.string());
    REQUIRE(back.size() == 2);
    CHECK((back[0].position - cloud[0].position).norm() < 1e-8);
    REQUIRE(back[0].normal.has_value());
    CHECK((*back[0].normal - Vec3(0, 0, 1)).norm() < 1e-8);
    CHECK_FALSE(back[1].normal.has_value());

    write_text(p, "1 2 banana\n");
    CHECK_THROWS_AS(load_xyz(p.string()), InputError);
}

TEST_CASE("area-weighted sampling follows face areas and stays on the surface") {
    // two triangles in z=0, areas 0.5 and 4.5 (ratio 1:9)
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0),
                  Vec3(2, 0, 0), Vec3(5, 0, 0), Vec3(2, 3, 0)};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    m.degenerate_face = {false, false};

    auto samples = area_weighted_sample(m, 20000, 42);
    std::size_t big = 0;
    for (const auto& s : samples) {
        CHECK(s.position.z() == doctest::Approx(0.0));
        if (s.face_id == 1) ++big;
        CHECK(s.label == -1);
    }
    CHECK(big > 20000 * 0.88);
    CHECK(big < 20000 * 0.92);

    auto again = area_weighted_sample(m, 100, 42);
    auto other = area_weighted_sample(m, 100, 43);
    CHECK(again[0].position == area_weighted_sample(m, 100, 42)[0].position);
    CHECK(again[0].position != other[0].position);
}

TEST_CASE("samples lie inside their source triangle") {
    synth::ToyShape shape = synth::make_winged(3);
    auto samples = area_weighted_sample(shape.mesh, 500, 9);
    for (const auto& s : samples) {
        const auto& tri = shape.mesh.faces[s.face_id];
        Vec3 a = shape.mesh.vertices[tri[0]], b = shape.mesh.vertices[tri[1]],
             c = shape.mesh.vertices[tri[2]];
        // solve barycentric coordinates and check they are a convex combination
        Eigen::Matrix<double, 3, 2> T;
        T.col(0) = b - a;
        T.col(1) = c - a;
        Eigen::Vector2d uv = (T.transpose() * T).ldlt().solve(T.transpose() * (s.position - a));
        CHECK(uv.x() >= -1e-9);
        CHECK(uv.y() >= -1e-9);
        CHECK(uv.x() + uv.y() <= 1.0 + 1e-9);
        CHECK((a + T * uv - s.position).norm() < 1e-9);
        CHECK(s.label == shape.mesh.face_labels[s.face_id]);
    }
}

TEST_CASE("bounding sphere covers all points and is near-minimal on a cube") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i)
        pts.push_back(Vec3((i & 1) ? 1 : -1, (i & 2) ? 1 : -1, (i & 4) ? 1 : -1));
    BoundingSphere s = bounding_sphere(pts);
    for (const auto& p : pts) CHECK((p - s.center).norm() <= s.radius + 1e-9);
    CHECK(s.radius >= std::sqrt(3.0) - 1e-9);   // cannot beat the optimum
    CHECK(s.radius <= 1.3 * std::sqrt(3.0));    // and stays close to it

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec3> rp(50);
        for (auto& p : rp) p = Vec3(u(rng), u(rng), u(rng));
        BoundingSphere rs = bounding_sphere(rp);
        for (const auto& p : rp) CHECK((p - rs.center).norm() <= rs.radius + 1e-9);
    }
    CHECK_THROWS_AS(bounding_sphere(std::vector<Vec3>{}), InputError);
}

TEST_CASE("obb recovers a rotated box") {
    std::mt19937_64 rng(11);
    synth::ToyShape dummy;  // reuse rotation helper
    Mat3 r = synth::random_rotation(rng);
    Vec3 ext(3.0, 2.0, 1.0);
    std::vector<Vec3> pts;
    for (int i = 0; i < 2000; ++i) {
        Vec3 local(synth::uniform(rng, -ext.x(), ext.x()), synth::uniform(rng, -ext.y(), ext.y()),
                   synth::uniform(rng, -ext.z(), ext.z()));
        pts.push_back(r * local + Vec3(5, -2, 1));
    }
    OrientedBoundingBox box = compute_obb(pts);
    CHECK((box.center - Vec3(5, -2, 1)).norm() < 0.2);
    // principal axes should line up with the box axes (longest first)
    CHECK(std::abs(box.axes.col(0).dot(r.col(0))) > 0.99);
    CHECK(std::abs(box.axes.col(1).dot(r.col(1))) > 0.99);
    CHECK(std::abs(box.axes.col(2).dot(r.col(2))) > 0.99);
    CHECK(box.half_extents.x() == doctest::Approx(ext.x()).epsilon(0.05));
    CHECK(box.half_extents.z() == doctest::Approx(ext.z()).epsilon(0.05));
    // sign convention: first non-negligible component of each axis positive
    for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < 3; ++c) {
            if (std::abs(box.axes.col(i)[c]) > 1e-12) {
                CHECK(box.axes.col(i)[c] > 0.0);
                break;
            }
        }
    }
}

TEST_CASE("knn graph matches a brute-force oracle including ties") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> gi(0, 4);
    // grid points force exact distance ties; oracle uses (d², index) ordering
    std::vector<Vec3> pts;
    std::set<std::array<int, 3>> seen;
    while (pts.size() < 60) {
        std::array<int, 3> g{gi(rng), gi(rng), gi(rng)};
        if (seen.insert(g).second) pts.push_back(Vec3(g[0], g[1], g[2]));
    }
    const int k = 5;
    NeighborGraph graph = knn_graph(pts, k);
    NeighborGraph serial = knn_graph_serial(pts, k);
    CHECK(graph.neighbors == serial.neighbors);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<std::pair<double, std::uint32_t>> all;
        for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i) all.emplace_back((pts[j] - pts[i]).squaredNorm(), (std::uint32_t)j);
        std::sort(all.begin(), all.end());
        for (int n = 0; n < k; ++n) CHECK(graph.neighbors[i][n] == all[n].second);
    }
    CHECK_THROWS_AS(knn_graph(pts, 0), InputError);
    CHECK_THROWS_AS(knn_graph(pts, (int)pts.size()), InputError);
}

TEST_CASE("nearest_point breaks ties by lower index") {
    std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(1, 0, 0)};
    CHECK(nearest_point(pts, Vec3(0.9, 0, 0)) == 0);
    CHECK(nearest_point(pts, Vec3(0, 0, 0)) == 0);  // all equidistant
    CHECK(nearest_point(pts, Vec3(-2, 0, 0)) == 1);
}

TEST_CASE("mesh validate rejects bad indices and label counts") {
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 5}};
    CHECK_THROWS_AS(m.validate(), InputError);
    m.faces = {{0, 1, 2}};
    m.face_labels = {1, 2};
    CHECK_THROWS_AS(m.validate(), InputError);
    m.face_labels = {1};
    CHECK_NOTHROW(m.validate());
}
