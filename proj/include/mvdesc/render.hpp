#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvdesc/geometry.hpp"

namespace mvdesc {

struct Camera {
    Vec3 eye;
    Vec3 target;
    Vec3 up = Vec3(0, 0, 1);
    double vertical_fov = 50.0 * 3.14159265358979323846 / 180.0;  // radians
    int resolution = 227;                                         // square image
    double near_plane = 0.01;
    double far_plane = 100.0;

    void validate() const;
};

// Fixed Phong coefficients; identical at train and test time so renders
// match bit-exactly.
struct ShadingConfig {
    double ambient = 0.1;
    double diffuse = 0.7;
    double specular = 0.2;
    double shininess = 16.0;
};

struct ShadedImage {
    int resolution = 0;
    std::vector<float> pixels;  // row-major, intensities in [0,1], background 0

    float& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * resolution + c]; }
    float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * resolution + c]; }
};

constexpr std::uint32_t kEmptyPixel = std::numeric_limits<std::uint32_t>::max();

struct IndexMap {
    int resolution = 0;
    std::vector<std::uint32_t> index;  // kEmptyPixel where no sample landed
    std::vector<float> depth;          // view-space depth of the frontmost fragment

    bool contains(std::uint32_t sample_index) const;
};

// View-space depth buffer of the mesh under cam (the visibility primitive
// shared by render_shaded and render_index).
struct DepthBuffer {
    int resolution = 0;
    std::vector<float> depth;  // +inf where empty
};

DepthBuffer rasterize_depth(const TriangleMesh& mesh, const Camera& cam);

ShadedImage render_shaded(const TriangleMesh& mesh, const Camera& cam, const Vec3& light_dir,
                          const ShadingConfig& shading = {});

// Serial reference rasterizer; render_shaded may shade rows in parallel.
ShadedImage render_shaded_serial(const TriangleMesh& mesh, const Camera& cam,
                                 const Vec3& light_dir, const ShadingConfig& shading = {});

IndexMap render_index(const TriangleMesh& mesh, const std::vector<PointSample>& samples,
                      const Camera& cam);

ShadedImage render_point_cloud(const std::vector<CloudPoint>& cloud, const Camera& cam,
                               double ball_radius, const ShadingConfig& shading = {});

// Lossless 90-degree rotation: one quarter turn maps pixel (r,c) to
// (c, H-1-r).
ShadedImage in_plane_rotate(const ShadedImage& img, int quarter_turns);

// Binary PGM (P5, maxval 255), for bit-exact golden files.
void save_pgm(const ShadedImage& img, const std::string& path);
ShadedImage load_pgm(const std::string& path);

// Projects p into cam's image; returns false when outside the frustum.
// On success fills pixel row/col (continuous coordinates) and view depth.
bool project_point(const Camera& cam, const Vec3& p, double& row, double& col, double& depth);

}  // namespace mvdesc
