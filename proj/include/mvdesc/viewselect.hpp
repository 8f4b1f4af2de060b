#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvdesc/geometry.hpp"
#include "mvdesc/render.hpp"

namespace mvdesc {

struct ViewDirection {
    Vec3 dir;      // unit
    double theta;  // polar angle in [0, pi]
    double phi;    // azimuth in [0, 2*pi)

    static ViewDirection from_vector(const Vec3& v);
};

struct ViewConfig {
    int n_directions = 150;
    int n_medoids = 3;                          // K
    std::vector<double> radii = {0.25, 0.5, 0.75};  // fractions of bounding-sphere radius (M)
    int n_inplane = 4;                          // L
    int resolution = 227;
    // Distance factor (times bounding-sphere radius) of the per-shape
    // visibility cameras; must place the camera outside the shape so the
    // whole surface fits in the frustum.
    double visibility_distance = 2.5;
    double vertical_fov = 50.0 * 3.14159265358979323846 / 180.0;
    ShadingConfig shading;

    void validate() const;
    int views_per_point() const { return n_medoids * (int)radii.size() * n_inplane; }
};

struct ViewStack {
    std::uint32_t point_id = 0;
    // images[i] corresponds to view id i in construction order
    // (direction-major, then radius, then rotation); consumers must treat
    // them as an unordered set.
    std::vector<ShadedImage> images;
    std::vector<Camera> cameras;  // the K*M generating cameras
};

// Thrown when a sample is visible from none of the sampled directions.
struct ZeroVisibilityError : InputError {
    std::uint32_t point_id;
    explicit ZeroVisibilityError(std::uint32_t id)
        : InputError("point " + std::to_string(id) + " is visible from no sampled direction"),
          point_id(id) {}
};

// Deterministic near-uniform directions via a spherical Fibonacci lattice.
std::vector<ViewDirection> sample_directions(int n);

// Meshes and point clouds share the view pipeline through this adapter.
struct Scene {
    BoundingSphere sphere;
    std::vector<PointSample> samples;  // candidate description points
    // renders with the light along the view direction
    std::function<ShadedImage(const Camera&)> shaded;
    std::function<IndexMap(const Camera&)> index;
};

Scene make_mesh_scene(const TriangleMesh& mesh, std::vector<PointSample> samples,
                      const ShadingConfig& shading);
Scene make_cloud_scene(const std::vector<CloudPoint>& cloud, double ball_radius,
                       const ShadingConfig& shading);

// Index-map analogue for point clouds: impostor depth buffer plus sample
// projection.
IndexMap render_index_cloud(const std::vector<CloudPoint>& cloud, const Camera& cam,
                            double ball_radius);

// Per-shape visibility pre-pass: one index render per direction, shared by
// all samples of the shape.
struct VisibilityTable {
    // visible[s] = indices into dirs from which sample s is visible
    std::vector<std::vector<int>> visible;
};
VisibilityTable visible_directions(const TriangleMesh& mesh,
                                   const std::vector<PointSample>& samples,
                                   const std::vector<ViewDirection>& dirs, const ViewConfig& config,
                                   const BoundingSphere& sphere);
VisibilityTable visible_directions_scene(const Scene& scene, const std::vector<ViewDirection>& dirs,
                                         const ViewConfig& config);

// K-medoids under angular distance: farthest-first seeding, then alternate
// assignment and medoid update. Returns indices into dirs.
std::vector<int> kmedoids_directions(const std::vector<ViewDirection>& dirs, int k,
                                     std::uint64_t seed);

Camera make_view_camera(const Vec3& point, const Vec3& direction, double radius_fraction,
                        const BoundingSphere& sphere, const ViewConfig& config);

std::vector<Camera> build_cameras(const PointSample& point, const std::vector<ViewDirection>& dirs,
                                  const std::vector<int>& medoids, const BoundingSphere& sphere,
                                  const ViewConfig& config);

// Full per-point pipeline. visible_dirs are indices into dirs for this point
// (from the shared pre-pass). The point must survive a render_index check on
// every built camera; directions that fail are replaced by the nearest
// passing alternative.
ViewStack render_view_stack(const TriangleMesh& mesh, const std::vector<PointSample>& samples,
                            std::uint32_t point_id, const std::vector<ViewDirection>& dirs,
                            const std::vector<int>& visible_dirs, const BoundingSphere& sphere,
                            const ViewConfig& config, std::uint64_t seed);
ViewStack render_view_stack_scene(const Scene& scene, std::uint32_t point_id,
                                  const std::vector<ViewDirection>& dirs,
                                  const std::vector<int>& visible_dirs, const ViewConfig& config,
                                  std::uint64_t seed);

// Persists a stack as PGM images plus a manifest listing point id, camera
// parameters and rotation index per image.
void save_view_stack(const ViewStack& stack, const std::string& directory);

}  // namespace mvdesc
