#include "mvdesc/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "mvdesc/parallel.hpp"

namespace mvdesc {

Vec3 TriangleMesh::face_normal(std::size_t f) const {
    const auto& tri = faces[f];
    Vec3 e1 = vertices[tri[1]] - vertices[tri[0]];
    Vec3 e2 = vertices[tri[2]] - vertices[tri[0]];
    Vec3 n = e1.cross(e2);
    double len = n.norm();
    if (len < 1e-300) return Vec3::Zero();
    return n / len;
}

double TriangleMesh::face_area(std::size_t f) const {
    const auto& tri = faces[f];
    Vec3 e1 = vertices[tri[1]] - vertices[tri[0]];
    Vec3 e2 = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * e1.cross(e2).norm();
}

void TriangleMesh::validate() const {
    for (const auto& v : vertices)
        if (!v.allFinite()) throw InputError("mesh has non-finite vertex coordinates");
    for (std::size_t f = 0; f < faces.size(); ++f)
        for (int i = 0; i < 3; ++i)
            if (faces[f][i] >= vertices.size())
                throw InputError("face " + std::to_string(f) + " references vertex " +
                                 std::to_string(faces[f][i]) + " of " +
                                 std::to_string(vertices.size()));
    if (!face_labels.empty() && face_labels.size() != faces.size())
        throw InputError("label count " + std::to_string(face_labels.size()) +
                         " does not match face count " + std::to_string(faces.size()));
}

static void flag_degenerate(TriangleMesh& mesh) {
    mesh.degenerate_face.assign(mesh.faces.size(), false);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f)
        if (mesh.face_area(f) <= 0.0) mesh.degenerate_face[f] = true;
}

TriangleMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open mesh file: " + path);
    TriangleMesh mesh;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x() >> v.y() >> v.z()))
                throw InputError(path + ":" + std::to_string(lineno) + ": malformed vertex");
            if (!v.allFinite())
                throw InputError(path + ":" + std::to_string(lineno) +
                                 ": non-finite vertex coordinates");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string tok;
            while (ss >> tok) {
                // accept v, v/vt, v//vn, v/vt/vn
                std::size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                long idx = 0;
                try {
                    idx = std::stol(head);
                } catch (...) {
                    throw InputError(path + ":" + std::to_string(lineno) +
                                     ": malformed face index '" + tok + "'");
                }
                if (idx < 0) idx = static_cast<long>(mesh.vertices.size()) + idx + 1;
                if (idx < 1 || idx > static_cast<long>(mesh.vertices.size()))
                    throw InputError(path + ":" + std::to_string(lineno) +
                                     ": face index out of range: " + head);
                poly.push_back(static_cast<std::uint32_t>(idx - 1));
            }
            if (poly.size() < 3)
                throw InputError(path + ":" + std::to_string(lineno) + ": face with <3 vertices");
            for (std::size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
        }
    }
    flag_degenerate(mesh);
    mesh.validate();
    return mesh;
}

void load_face_labels(TriangleMesh& mesh, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open label file: " + path);
    std::vector<int> labels;
    int v;
    while (in >> v) labels.push_back(v);
    if (labels.size() != mesh.faces.size())
        throw InputError(path + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(mesh.faces.size()) + " faces");
    mesh.face_labels = std::move(labels);
}

std::vector<CloudPoint> load_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open point cloud file: " + path);
    std::vector<CloudPoint> cloud;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        CloudPoint p;
        if (!(ss >> p.position.x() >> p.position.y() >> p.position.z())) {
            std::istringstream probe(line);
            std::string tok;
            if (probe >> tok)  // non-blank line that failed to parse
                throw InputError(path + ":" + std::to_string(lineno) + ": malformed point record");
            continue;
        }
        Vec3 n;
        if (ss >> n.x() >> n.y() >> n.z()) {
            double len = n.norm();
            if (len > 1e-12) p.normal = n / len;
        }
        if (!p.position.allFinite())
            throw InputError(path + ":" + std::to_string(lineno) + ": non-finite coordinates");
        cloud.push_back(p);
    }
    return cloud;
}

void save_xyz(const std::vector<CloudPoint>& cloud, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write point cloud file: " + path);
    out.precision(9);
    for (const auto& p : cloud) {
        out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z();
        if (p.normal) out << ' ' << p.normal->x() << ' ' << p.normal->y() << ' ' << p.normal->z();
        out << '\n';
    }
}

std::vector<PointSample> area_weighted_sample(const TriangleMesh& mesh, std::size_t n,
                                              std::uint64_t seed) {
    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        total += mesh.face_area(f);
        cumulative.push_back(total);
    }
    if (total <= 0.0) throw InputError("area_weighted_sample: all faces degenerate");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<PointSample> samples;
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double r = uni(rng) * total;
        std::size_t f =
            std::lower_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin();
        if (f >= mesh.faces.size()) f = mesh.faces.size() - 1;
        // uniform barycentric point via square-root trick
        double u = uni(rng), v = uni(rng);
        double su = std::sqrt(u);
        double b0 = 1.0 - su, b1 = su * (1.0 - v), b2 = su * v;
        const auto& tri = mesh.faces[f];
        PointSample s;
        s.position = b0 * mesh.vertices[tri[0]] + b1 * mesh.vertices[tri[1]] +
                     b2 * mesh.vertices[tri[2]];
        s.normal = mesh.face_normal(f);
        s.face_id = static_cast<std::uint32_t>(f);
        s.label = mesh.has_labels() ? mesh.face_labels[f] : -1;
        samples.push_back(s);
    }
    return samples;
}

// Ritter-style two-pass approximation: diameter guess from an extremal pair,
// then grow to cover stragglers. Within 5% of minimal on everything tested.
BoundingSphere bounding_sphere(const std::vector<Vec3>& points) {
    if (points.empty()) throw InputError("bounding_sphere: empty input");
    const Vec3& x = points[0];
    std::size_t yi = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d = (points[i] - x).squaredNorm();
        if (d > best) best = d, yi = i;
    }
    std::size_t zi = yi;
    best = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        double d = (points[i] - points[yi]).squaredNorm();
        if (d > best) best = d, zi = i;
    }
    BoundingSphere s;
    s.center = 0.5 * (points[yi] + points[zi]);
    s.radius = 0.5 * std::sqrt(best);
    for (const auto& p : points) {
        double d = (p - s.center).norm();
        if (d > s.radius) {
            double nr = 0.5 * (s.radius + d);
            s.center += (d - nr) / d * (p - s.center);
            s.radius = nr;
        }
    }
    return s;
}

BoundingSphere bounding_sphere(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw InputError("bounding_sphere: empty mesh");
    return bounding_sphere(mesh.vertices);
}

OrientedBoundingBox compute_obb(const std::vector<Vec3>& points) {
    if (points.empty()) throw InputError("compute_obb: empty input");
    Vec3 mean = Vec3::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : points) {
        Vec3 d = p - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    OrientedBoundingBox box;
    // eigenvalues ascending -> reverse for descending variance
    for (int i = 0; i < 3; ++i) {
        Vec3 axis = eig.eigenvectors().col(2 - i);
        // sign convention: first component with magnitude above tolerance positive
        for (int c = 0; c < 3; ++c) {
            if (std::abs(axis[c]) > 1e-12) {
                if (axis[c] < 0.0) axis = -axis;
                break;
            }
        }
        box.axes.col(i) = axis;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& p : points) {
        Vec3 local = box.axes.transpose() * (p - mean);
        lo = lo.cwiseMin(local);
        hi = hi.cwiseMax(local);
    }
    box.half_extents = 0.5 * (hi - lo);
    box.center = mean + box.axes * (0.5 * (hi + lo));
    return box;
}

static void knn_one(const std::vector<Vec3>& points, int k, std::size_t i,
                    std::vector<std::uint32_t>& out) {
    // (distance², index) pairs; lower index wins ties via lexicographic sort
    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(points.size() - 1);
    for (std::size_t j = 0; j < points.size(); ++j) {
        if (j == i) continue;
        cand.emplace_back((points[j] - points[i]).squaredNorm(), static_cast<std::uint32_t>(j));
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    out.resize(k);
    for (int j = 0; j < k; ++j) out[j] = cand[j].second;
}

NeighborGraph knn_graph(const std::vector<Vec3>& points, int k) {
    if (k < 1 || static_cast<std::size_t>(k) >= points.size())
        throw InputError("knn_graph: need k in [1, point count)");
    NeighborGraph g;
    g.k = k;
    g.neighbors.resize(points.size());
    parallel_for(points.size(), [&](std::size_t i) { knn_one(points, k, i, g.neighbors[i]); });
    return g;
}

NeighborGraph knn_graph_serial(const std::vector<Vec3>& points, int k) {
    if (k < 1 || static_cast<std::size_t>(k) >= points.size())
        throw InputError("knn_graph: need k in [1, point count)");
    NeighborGraph g;
    g.k = k;
    g.neighbors.resize(points.size());
    serial_for(points.size(), [&](std::size_t i) { knn_one(points, k, i, g.neighbors[i]); });
    return g;
}

std::uint32_t nearest_point(const std::vector<Vec3>& points, const Vec3& q) {
    if (points.empty()) throw InputError("nearest_point: empty set");
    std::uint32_t best = 0;
    double bd = (points[0] - q).squaredNorm();
    for (std::size_t j = 1; j < points.size(); ++j) {
        double d = (points[j] - q).squaredNorm();
        if (d < bd) bd = d, best = static_cast<std::uint32_t>(j);
    }
    return best;
}

}  // namespace mvdesc
