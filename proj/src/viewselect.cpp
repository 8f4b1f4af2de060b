#include "mvdesc/viewselect.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "mvdesc/parallel.hpp"

namespace mvdesc {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ViewDirection ViewDirection::from_vector(const Vec3& v) {
    ViewDirection d;
    d.dir = v.normalized();
    d.theta = std::acos(std::clamp(d.dir.z(), -1.0, 1.0));
    d.phi = std::atan2(d.dir.y(), d.dir.x());
    if (d.phi < 0.0) d.phi += 2.0 * kPi;
    return d;
}

void ViewConfig::validate() const {
    if (n_directions < 1) throw InputError("view config: n_directions must be >= 1");
    if (n_medoids < 1 || n_medoids > n_directions)
        throw InputError("view config: need 1 <= K <= n_directions");
    if (radii.empty()) throw InputError("view config: need at least one radius");
    double prev = 0.0;
    for (double r : radii) {
        if (!(r > prev && r <= 2.0))
            throw InputError("view config: radii must be strictly increasing in (0, 2]");
        prev = r;
    }
    if (n_inplane < 1) throw InputError("view config: L must be >= 1");
    if (resolution < 1) throw InputError("view config: resolution must be positive");
}

std::vector<ViewDirection> sample_directions(int n) {
    if (n < 1) throw InputError("sample_directions: n must be >= 1");
    std::vector<ViewDirection> dirs;
    dirs.reserve(n);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    for (int i = 0; i < n; ++i) {
        double z = 1.0 - 2.0 * (i + 0.5) / n;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double phi = 2.0 * kPi * std::fmod(i / golden, 1.0);
        dirs.push_back(ViewDirection::from_vector(Vec3(r * std::cos(phi), r * std::sin(phi), z)));
    }
    return dirs;
}

static Camera visibility_camera(const Vec3& dir, const BoundingSphere& sphere,
                                const ViewConfig& config) {
    Camera cam;
    cam.eye = sphere.center + dir * (config.visibility_distance * sphere.radius);
    cam.target = sphere.center;
    Vec3 up = Vec3(0, 0, 1) - dir * dir.z();
    cam.up = up.norm() < 1e-6 ? Vec3(1, 0, 0) : Vec3(up.normalized());
    cam.vertical_fov = config.vertical_fov;
    cam.resolution = config.resolution;
    cam.near_plane = 0.05 * sphere.radius;
    cam.far_plane = (config.visibility_distance + 2.0) * sphere.radius;
    return cam;
}

Scene make_mesh_scene(const TriangleMesh& mesh, std::vector<PointSample> samples,
                      const ShadingConfig& shading) {
    Scene scene;
    scene.sphere = bounding_sphere(mesh);
    scene.samples = std::move(samples);
    scene.shaded = [&mesh, shading](const Camera& cam) {
        Vec3 light = (cam.eye - cam.target).normalized();
        return render_shaded_serial(mesh, cam, light, shading);
    };
    scene.index = [&mesh, samples = scene.samples](const Camera& cam) {
        return render_index(mesh, samples, cam);
    };
    return scene;
}

IndexMap render_index_cloud(const std::vector<CloudPoint>& cloud, const Camera& cam,
                            double ball_radius) {
    cam.validate();
    // Impostor depth-only pass, then test each cloud point against it (the
    // point itself sits ball_radius behind its impostor front surface).
    IndexMap map;
    map.resolution = cam.resolution;
    map.index.assign((std::size_t)cam.resolution * cam.resolution, kEmptyPixel);
    map.depth.assign(map.index.size(), std::numeric_limits<float>::infinity());

    // depth-only impostor pass
    std::vector<float> depth(map.index.size(), std::numeric_limits<float>::infinity());
    double tan_half = std::tan(0.5 * cam.vertical_fov);
    for (const auto& p : cloud) {
        double row, col, z;
        if (!project_point(cam, p.position, row, col, z)) continue;
        double scale = cam.resolution / (2.0 * z * tan_half);
        double pr = ball_radius * scale;
        int cmin = std::max(0, (int)std::ceil(col - pr));
        int cmax = std::min(cam.resolution - 1, (int)std::floor(col + pr));
        int rmin = std::max(0, (int)std::ceil(row - pr));
        int rmax = std::min(cam.resolution - 1, (int)std::floor(row + pr));
        for (int r = rmin; r <= rmax; ++r)
            for (int c = cmin; c <= cmax; ++c) {
                double dx = c - col, dy = r - row;
                double rho = std::sqrt(dx * dx + dy * dy) / scale;
                if (rho > ball_radius) continue;
                double zf = z - std::sqrt(ball_radius * ball_radius - rho * rho);
                std::size_t idx = (std::size_t)r * cam.resolution + c;
                if ((float)zf < depth[idx]) depth[idx] = (float)zf;
            }
    }
    const double eps_depth = 1e-3 * (cam.far_plane - cam.near_plane) + ball_radius;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double row, col, z;
        if (!project_point(cam, cloud[i].position, row, col, z)) continue;
        int r = std::clamp((int)std::lround(row), 0, cam.resolution - 1);
        int c = std::clamp((int)std::lround(col), 0, cam.resolution - 1);
        std::size_t idx = (std::size_t)r * cam.resolution + c;
        if (z <= depth[idx] + eps_depth && z < map.depth[idx]) {
            map.depth[idx] = (float)z;
            map.index[idx] = (std::uint32_t)i;
        }
    }
    return map;
}

Scene make_cloud_scene(const std::vector<CloudPoint>& cloud, double ball_radius,
                       const ShadingConfig& shading) {
    if (cloud.empty()) throw InputError("make_cloud_scene: empty cloud");
    Scene scene;
    std::vector<Vec3> positions;
    positions.reserve(cloud.size());
    for (const auto& p : cloud) positions.push_back(p.position);
    scene.sphere = bounding_sphere(positions);
    scene.samples.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        PointSample s;
        s.position = cloud[i].position;
        s.normal = cloud[i].normal ? *cloud[i].normal : Vec3(0, 0, 1);
        s.face_id = (std::uint32_t)i;
        scene.samples.push_back(s);
    }
    scene.shaded = [&cloud, ball_radius, shading](const Camera& cam) {
        return render_point_cloud(cloud, cam, ball_radius, shading);
    };
    scene.index = [&cloud, ball_radius](const Camera& cam) {
        return render_index_cloud(cloud, cam, ball_radius);
    };
    return scene;
}

VisibilityTable visible_directions_scene(const Scene& scene, const std::vector<ViewDirection>& dirs,
                                         const ViewConfig& config) {
    VisibilityTable table;
    table.visible.resize(scene.samples.size());
    std::vector<std::vector<char>> seen(dirs.size());
    parallel_for(dirs.size(), [&](std::size_t d) {
        Camera cam = visibility_camera(dirs[d].dir, scene.sphere, config);
        IndexMap map = scene.index(cam);
        seen[d].assign(scene.samples.size(), 0);
        for (std::uint32_t v : map.index)
            if (v != kEmptyPixel) seen[d][v] = 1;
    });
    for (std::size_t s = 0; s < scene.samples.size(); ++s)
        for (std::size_t d = 0; d < dirs.size(); ++d)
            if (seen[d][s]) table.visible[s].push_back(static_cast<int>(d));
    return table;
}

VisibilityTable visible_directions(const TriangleMesh& mesh,
                                   const std::vector<PointSample>& samples,
                                   const std::vector<ViewDirection>& dirs, const ViewConfig& config,
                                   const BoundingSphere& sphere) {
    Scene scene;
    scene.sphere = sphere;
    scene.samples = samples;
    scene.index = [&mesh, &samples](const Camera& cam) {
        return render_index(mesh, samples, cam);
    };
    return visible_directions_scene(scene, dirs, config);
}

static double angular_distance(const Vec3& a, const Vec3& b) {
    return std::acos(std::clamp(a.dot(b), -1.0, 1.0));
}

std::vector<int> kmedoids_directions(const std::vector<ViewDirection>& dirs, int k,
                                     std::uint64_t seed) {
    const int n = static_cast<int>(dirs.size());
    if (k < 1 || k > n) throw InputError("kmedoids: need 1 <= K <= |dirs|");
    if (k == n) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    // Small instances are solved exactly: enumerate all medoid subsets and
    // minimize the summed min-distance, ties by lexicographically smallest
    // index set. The alternating heuristic below is only a local method.
    double subsets = 1.0;
    for (int i = 0; i < k; ++i) subsets = subsets * (n - i) / (i + 1);
    if (subsets <= 4096.0) {
        std::vector<int> pick(k), best;
        double best_cost = std::numeric_limits<double>::infinity();
        std::iota(pick.begin(), pick.end(), 0);
        while (true) {
            double cost = 0.0;
            for (int i = 0; i < n; ++i) {
                double d = std::numeric_limits<double>::infinity();
                for (int m : pick) d = std::min(d, angular_distance(dirs[i].dir, dirs[m].dir));
                cost += d;
            }
            if (cost < best_cost - 1e-15) {
                best_cost = cost;
                best = pick;
            }
            // next combination in lexicographic order
            int i = k - 1;
            while (i >= 0 && pick[i] == n - k + i) --i;
            if (i < 0) break;
            ++pick[i];
            for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
        }
        return best;
    }
    // farthest-first seeding from a seed-chosen start
    std::vector<int> medoids;
    medoids.push_back(static_cast<int>(seed % n));
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    while ((int)medoids.size() < k) {
        int last = medoids.back();
        int best = -1;
        double bd = -1.0;
        for (int i = 0; i < n; ++i) {
            mind[i] = std::min(mind[i], angular_distance(dirs[i].dir, dirs[last].dir));
            if (mind[i] > bd) {
                bd = mind[i];
                best = i;
            }
        }
        medoids.push_back(best);
    }
    std::sort(medoids.begin(), medoids.end());

    std::vector<int> assign(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
        // assignment: nearest medoid, ties by lower medoid position
        for (int i = 0; i < n; ++i) {
            double bd = std::numeric_limits<double>::infinity();
            for (int m = 0; m < k; ++m) {
                double d = angular_distance(dirs[i].dir, dirs[medoids[m]].dir);
                if (d < bd) {
                    bd = d;
                    assign[i] = m;
                }
            }
        }
        // medoid update: member minimizing summed distance within its cluster,
        // ties by lower index
        bool changed = false;
        for (int m = 0; m < k; ++m) {
            int best = medoids[m];
            double bc = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (assign[i] != m) continue;
                double cost = 0.0;
                for (int j = 0; j < n; ++j)
                    if (assign[j] == m) cost += angular_distance(dirs[i].dir, dirs[j].dir);
                if (cost < bc - 1e-15 || (std::abs(cost - bc) <= 1e-15 && i < best)) {
                    bc = cost;
                    best = i;
                }
            }
            if (best != medoids[m]) {
                medoids[m] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }
    std::sort(medoids.begin(), medoids.end());
    return medoids;
}

Camera make_view_camera(const Vec3& point, const Vec3& direction, double radius_fraction,
                        const BoundingSphere& sphere, const ViewConfig& config) {
    Camera cam;
    double dist = radius_fraction * sphere.radius;
    cam.eye = point + direction * dist;
    cam.target = point;
    // deterministic up: world +z projected orthogonal to the view direction,
    // falling back to +x when nearly parallel
    Vec3 up = Vec3(0, 0, 1) - direction * direction.z();
    if (up.norm() < 1e-6) {
        up = Vec3(1, 0, 0) - direction * direction.x();
    }
    cam.up = up.normalized();
    cam.vertical_fov = config.vertical_fov;
    cam.resolution = config.resolution;
    cam.near_plane = std::max(1e-6 * sphere.radius, 0.01 * dist);
    cam.far_plane = dist + 2.5 * sphere.radius;
    return cam;
}

std::vector<Camera> build_cameras(const PointSample& point, const std::vector<ViewDirection>& dirs,
                                  const std::vector<int>& medoids, const BoundingSphere& sphere,
                                  const ViewConfig& config) {
    std::vector<Camera> cams;
    cams.reserve(medoids.size() * config.radii.size());
    for (int m : medoids)
        for (double r : config.radii)
            cams.push_back(make_view_camera(point.position, dirs[m].dir, r, sphere, config));
    return cams;
}

ViewStack render_view_stack_scene(const Scene& scene, std::uint32_t point_id,
                                  const std::vector<ViewDirection>& dirs,
                                  const std::vector<int>& visible_dirs, const ViewConfig& config,
                                  std::uint64_t seed) {
    config.validate();
    if (visible_dirs.empty()) throw ZeroVisibilityError(point_id);
    const PointSample& point = scene.samples[point_id];
    const BoundingSphere& sphere = scene.sphere;

    std::vector<ViewDirection> candidates;
    candidates.reserve(visible_dirs.size());
    for (int d : visible_dirs) candidates.push_back(dirs[d]);

    int k = std::min<int>(config.n_medoids, (int)candidates.size());
    std::vector<int> medoids = kmedoids_directions(candidates, k, seed);

    // re-verify visibility at every radius; swap in the angularly closest
    // passing alternative when a medoid direction occludes the point
    auto passes = [&](int ci) {
        for (double r : config.radii) {
            Camera cam = make_view_camera(point.position, candidates[ci].dir, r, sphere, config);
            if (!scene.index(cam).contains(point_id)) return false;
        }
        return true;
    };
    std::vector<char> used(candidates.size(), 0);
    for (int m : medoids) used[m] = 1;
    std::vector<int> verified;
    for (int m : medoids) {
        if (passes(m)) {
            verified.push_back(m);
            continue;
        }
        std::vector<int> order;
        for (int i = 0; i < (int)candidates.size(); ++i)
            if (!used[i]) order.push_back(i);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return angular_distance(candidates[a].dir, candidates[m].dir) <
                   angular_distance(candidates[b].dir, candidates[m].dir);
        });
        bool found = false;
        for (int alt : order) {
            if (passes(alt)) {
                used[alt] = 1;
                verified.push_back(alt);
                found = true;
                break;
            }
        }
        // no candidate survives the per-radius check (possible at coarse
        // resolutions where pixel-center depths disagree with the pre-pass);
        // keep the medoid rather than dropping a point the pre-pass saw
        if (!found) verified.push_back(m);
    }

    ViewStack stack;
    stack.point_id = point_id;
    stack.cameras = build_cameras(point, candidates, verified, sphere, config);
    stack.images.reserve(stack.cameras.size() * config.n_inplane);
    std::vector<ShadedImage> base(stack.cameras.size());
    parallel_for(stack.cameras.size(), [&](std::size_t ci) { base[ci] = scene.shaded(stack.cameras[ci]); });
    for (const auto& img : base)
        for (int l = 0; l < config.n_inplane; ++l) stack.images.push_back(in_plane_rotate(img, l));
    return stack;
}

ViewStack render_view_stack(const TriangleMesh& mesh, const std::vector<PointSample>& samples,
                            std::uint32_t point_id, const std::vector<ViewDirection>& dirs,
                            const std::vector<int>& visible_dirs, const BoundingSphere& sphere,
                            const ViewConfig& config, std::uint64_t seed) {
    Scene scene;
    scene.sphere = sphere;
    scene.samples = samples;
    scene.shaded = [&mesh, &config](const Camera& cam) {
        Vec3 light = (cam.eye - cam.target).normalized();  // light along view direction
        return render_shaded_serial(mesh, cam, light, config.shading);
    };
    scene.index = [&mesh, &samples](const Camera& cam) {
        return render_index(mesh, samples, cam);
    };
    return render_view_stack_scene(scene, point_id, dirs, visible_dirs, config, seed);
}

void save_view_stack(const ViewStack& stack, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    std::ofstream manifest(fs::path(directory) / "views.txt");
    if (!manifest) throw InputError("cannot write view manifest in " + directory);
    manifest.precision(9);
    manifest << "point_id " << stack.point_id << "\n";
    const int L = stack.cameras.empty() ? 0 : (int)(stack.images.size() / stack.cameras.size());
    for (std::size_t i = 0; i < stack.images.size(); ++i) {
        std::string name = "view_" + std::to_string(i) + ".pgm";
        save_pgm(stack.images[i], (fs::path(directory) / name).string());
        const Camera& cam = stack.cameras[i / L];
        manifest << name << " rot " << (i % L) << " eye " << cam.eye.x() << ' ' << cam.eye.y()
                 << ' ' << cam.eye.z() << " target " << cam.target.x() << ' ' << cam.target.y()
                 << ' ' << cam.target.z() << " up " << cam.up.x() << ' ' << cam.up.y() << ' '
                 << cam.up.z() << " fov " << cam.vertical_fov << "\n";
    }
}

}  // namespace mvdesc
