#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvdesc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Thrown for unreadable/malformed input files and violated preconditions.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;
    std::vector<int> face_labels;       // empty or one label per face
    std::vector<bool> degenerate_face;  // zero-area faces, flagged but kept

    bool has_labels() const { return !face_labels.empty(); }
    Vec3 face_normal(std::size_t f) const;  // zero vector for degenerate faces
    double face_area(std::size_t f) const;
    void validate() const;  // checks indices, finiteness, label count
};

struct PointSample {
    Vec3 position;
    Vec3 normal;  // unit, from vertex winding of the source face
    std::uint32_t face_id = 0;
    int label = -1;  // -1 when the mesh has no labels
};

struct BoundingSphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
};

struct OrientedBoundingBox {
    Vec3 center = Vec3::Zero();
    Mat3 axes = Mat3::Identity();  // columns, descending principal variance
    Vec3 half_extents = Vec3::Zero();
};

struct NeighborGraph {
    int k = 0;
    std::vector<std::vector<std::uint32_t>> neighbors;  // exactly k entries each
};

// Mesh / point-cloud ingestion. OBJ with v/f records; polygons are
// fan-triangulated; label sidecar is one integer per face.
TriangleMesh load_mesh(const std::string& path);
void load_face_labels(TriangleMesh& mesh, const std::string& path);

struct CloudPoint {
    Vec3 position;
    std::optional<Vec3> normal;
};
std::vector<CloudPoint> load_xyz(const std::string& path);
void save_xyz(const std::vector<CloudPoint>& cloud, const std::string& path);

std::vector<PointSample> area_weighted_sample(const TriangleMesh& mesh, std::size_t n,
                                              std::uint64_t seed);

BoundingSphere bounding_sphere(const TriangleMesh& mesh);
BoundingSphere bounding_sphere(const std::vector<Vec3>& points);

OrientedBoundingBox compute_obb(const std::vector<Vec3>& points);

// Exact k-nearest neighbors, ties broken by lower index. OpenMP over query
// points; knn_graph_serial is the reference path.
NeighborGraph knn_graph(const std::vector<Vec3>& points, int k);
NeighborGraph knn_graph_serial(const std::vector<Vec3>& points, int k);

// Index of the nearest point in `points` to q (ties by lower index).
std::uint32_t nearest_point(const std::vector<Vec3>& points, const Vec3& q);

}  // namespace mvdesc
