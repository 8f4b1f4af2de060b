// Compares the OpenMP kernels against their serial reference implementations
// and verifies they produce identical results.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "mvdesc/geometry.hpp"
#include "mvdesc/parallel.hpp"
#include "mvdesc/render.hpp"
#include "mvdesc/viewselect.hpp"

using namespace mvdesc;
using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

TriangleMesh make_sphere_mesh(int slices, int stacks) {
    TriangleMesh m;
    for (int i = 0; i <= stacks; ++i) {
        double t = M_PI * i / stacks;
        for (int j = 0; j < slices; ++j) {
            double p = 2.0 * M_PI * j / slices;
            m.vertices.push_back(
                Vec3(std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)));
        }
    }
    auto id = [&](int i, int j) { return (std::uint32_t)(i * slices + (j % slices)); };
    for (int i = 0; i < stacks; ++i)
        for (int j = 0; j < slices; ++j) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    m.degenerate_face.assign(m.faces.size(), false);
    for (std::size_t f = 0; f < m.faces.size(); ++f)
        if (m.face_area(f) <= 0.0) m.degenerate_face[f] = true;
    return m;
}

template <class Fn>
double time_best_of(int reps, Fn&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds(t0, Clock::now()));
    }
    return best;
}

}  // namespace

int main() {
    std::printf("workers: %d (0 = runtime default)\n\n", workers());

    {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-1, 1);
        std::vector<Vec3> pts(20000);
        for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
        NeighborGraph a, b;
        double ts = time_best_of(3, [&] { a = knn_graph_serial(pts, 6); });
        double tp = time_best_of(3, [&] { b = knn_graph(pts, 6); });
        bool same = a.neighbors == b.neighbors;
        std::printf("knn_graph (20000 pts, k=6): serial %.3fs  parallel %.3fs  speedup %.2fx  %s\n",
                    ts, tp, ts / tp, same ? "identical" : "MISMATCH");
    }

    {
        TriangleMesh mesh = make_sphere_mesh(128, 64);
        Camera cam;
        cam.eye = Vec3(0, -3, 0);
        cam.target = Vec3(0, 0, 0);
        cam.resolution = 512;
        cam.near_plane = 0.1;
        cam.far_plane = 10.0;
        Vec3 light(0, -1, 0);
        ShadedImage a, b;
        double ts = time_best_of(3, [&] { a = render_shaded_serial(mesh, cam, light); });
        double tp = time_best_of(3, [&] { b = render_shaded(mesh, cam, light); });
        bool same = a.pixels == b.pixels;
        std::printf(
            "render_shaded (16k tris, 512px): serial %.3fs  parallel %.3fs  speedup %.2fx  %s\n",
            ts, tp, ts / tp, same ? "identical" : "MISMATCH");
    }

    {
        TriangleMesh mesh = make_sphere_mesh(64, 32);
        auto samples = area_weighted_sample(mesh, 512, 11);
        auto dirs = sample_directions(60);
        ViewConfig vc;
        vc.n_directions = 60;
        vc.resolution = 128;
        BoundingSphere sphere = bounding_sphere(mesh);
        VisibilityTable a, b;
        double tp = time_best_of(2, [&] { a = visible_directions(mesh, samples, dirs, vc, sphere); });
        int saved = workers();
        set_workers(1);
        double ts = time_best_of(2, [&] { b = visible_directions(mesh, samples, dirs, vc, sphere); });
        set_workers(saved);
        bool same = a.visible == b.visible;
        std::printf(
            "visibility pre-pass (60 dirs, 128px): 1-worker %.3fs  parallel %.3fs  speedup %.2fx  %s\n",
            ts, tp, ts / tp, same ? "identical" : "MISMATCH");
    }

    return 0;
}
