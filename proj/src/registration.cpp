#include "mvdesc/registration.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "mvdesc/parallel.hpp"

namespace mvdesc {

AffineTransform affine_init(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b) {
    if (part_a.empty() || part_b.empty()) throw InputError("affine_init: empty part");
    OrientedBoundingBox box_a = compute_obb(part_a);
    OrientedBoundingBox box_b = compute_obb(part_b);
    Vec3 scale;
    for (int i = 0; i < 3; ++i)
        scale[i] = box_a.half_extents[i] < 1e-8 ? 1.0 : box_b.half_extents[i] / box_a.half_extents[i];
    AffineTransform t;
    t.linear = box_b.axes * scale.asDiagonal() * box_a.axes.transpose();
    t.translation = box_b.center - t.linear * box_a.center;
    return t;
}

namespace {

// System matrix of one part's quadratic energy: identity from the data term
// plus the directed-pair smoothness form.
Eigen::SparseMatrix<double> part_system(std::size_t n, const NeighborGraph& graph, double w) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(n + 4 * n * std::max(1, graph.k));
    std::vector<double> diag(n, 1.0);  // data term
    for (std::size_t i = 0; i < graph.neighbors.size(); ++i) {
        for (std::uint32_t j : graph.neighbors[i]) {
            diag[i] += w;
            diag[j] += w;
            trips.emplace_back((int)i, (int)j, -w);
            trips.emplace_back((int)j, (int)i, -w);
        }
    }
    for (std::size_t i = 0; i < n; ++i) trips.emplace_back((int)i, (int)i, diag[i]);
    Eigen::SparseMatrix<double> m((int)n, (int)n);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

double smoothness_energy(const NeighborGraph& graph, const DeformationField& off, double w) {
    double e = 0.0;
    for (std::size_t i = 0; i < graph.neighbors.size(); ++i)
        for (std::uint32_t j : graph.neighbors[i]) e += w * (off[i] - off[j]).squaredNorm();
    return e;
}

void solve_part(const std::vector<Vec3>& pts, const std::vector<Vec3>& targets,
                const std::vector<std::uint32_t>& matches, const NeighborGraph& graph, double w,
                DeformationField& off) {
    const std::size_t n = pts.size();
    Eigen::MatrixXd rhs(n, 3);
    for (std::size_t i = 0; i < n; ++i) rhs.row(i) = (targets[matches[i]] - pts[i]).transpose();
    Eigen::SparseMatrix<double> sys = part_system(n, graph, w);
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-8);
    cg.compute(sys);
    Eigen::MatrixXd sol = cg.solve(rhs);
    off.resize(n);
    for (std::size_t i = 0; i < n; ++i) off[i] = sol.row(i).transpose();
}

std::vector<std::uint32_t> closest_points(const std::vector<Vec3>& from,
                                          const DeformationField& off,
                                          const std::vector<Vec3>& to) {
    std::vector<std::uint32_t> m(from.size());
    parallel_for(from.size(), [&](std::size_t i) { m[i] = nearest_point(to, from[i] + off[i]); });
    return m;
}

NeighborGraph part_graph(const std::vector<Vec3>& pts, int k) {
    NeighborGraph g;
    int kk = std::min<int>(k, (int)pts.size() - 1);
    if (kk >= 1) g = knn_graph(pts, kk);
    else {
        g.k = 0;
        g.neighbors.resize(pts.size());
    }
    return g;
}

}  // namespace

void solve_offsets(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b,
                   const std::vector<std::uint32_t>& matches_ab,
                   const std::vector<std::uint32_t>& matches_ba, const NeighborGraph& graph_a,
                   const NeighborGraph& graph_b, double smoothness_weight, DeformationField& off_a,
                   DeformationField& off_b, EnergyReport& report) {
    solve_part(part_a, part_b, matches_ab, graph_a, smoothness_weight, off_a);
    solve_part(part_b, part_a, matches_ba, graph_b, smoothness_weight, off_b);
    report.data_a_to_b = report.data_b_to_a = 0.0;
    for (std::size_t i = 0; i < part_a.size(); ++i)
        report.data_a_to_b += (part_a[i] + off_a[i] - part_b[matches_ab[i]]).squaredNorm();
    for (std::size_t i = 0; i < part_b.size(); ++i)
        report.data_b_to_a += (part_b[i] + off_b[i] - part_a[matches_ba[i]]).squaredNorm();
    report.smooth_a = smoothness_energy(graph_a, off_a, smoothness_weight);
    report.smooth_b = smoothness_energy(graph_b, off_b, smoothness_weight);
}

IcpResult icp_register(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b,
                       const RegistrationConfig& config) {
    if (part_a.empty() || part_b.empty()) throw InputError("icp_register: empty part");

    // normalize so part_b fits the unit cube; tolerances and the default
    // smoothness weight are then scale-free
    Vec3 lo = part_b[0], hi = part_b[0];
    for (const auto& p : part_b) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    double extent = (hi - lo).maxCoeff();
    double s = extent > 1e-12 ? 1.0 / extent : 1.0;
    auto norm_pts = [&](const std::vector<Vec3>& pts) {
        std::vector<Vec3> out(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) out[i] = (pts[i] - lo) * s;
        return out;
    };
    std::vector<Vec3> a = norm_pts(part_a);
    std::vector<Vec3> b = norm_pts(part_b);

    NeighborGraph graph_a = part_graph(a, config.neighbors);
    NeighborGraph graph_b = part_graph(b, config.neighbors);

    IcpResult res;
    res.offsets_a.assign(a.size(), Vec3::Zero());
    res.offsets_b.assign(b.size(), Vec3::Zero());
    res.matches_ab = closest_points(a, res.offsets_a, b);
    res.matches_ba = closest_points(b, res.offsets_b, a);

    double prev = std::numeric_limits<double>::infinity();
    double tol = 0.0;
    res.converged = false;
    for (int iter = 0; iter < config.max_iters; ++iter) {
        EnergyReport rep;
        rep.iteration = iter;
        solve_offsets(a, b, res.matches_ab, res.matches_ba, graph_a, graph_b,
                      config.smoothness_weight, res.offsets_a, res.offsets_b, rep);
        res.energy.push_back(rep);
        res.matches_ab = closest_points(a, res.offsets_a, b);
        res.matches_ba = closest_points(b, res.offsets_b, a);
        double e = rep.total();
        if (iter == 0) tol = config.tol_fraction * std::max(e, 1e-300);
        if (prev - e < tol) {
            res.converged = true;
            break;
        }
        prev = e;
    }
    for (auto& o : res.offsets_a) o /= s;
    for (auto& o : res.offsets_b) o /= s;
    return res;
}

CorrespondenceSet generate_pair_correspondences(const LabeledPointSet& shape_a,
                                                const LabeledPointSet& shape_b,
                                                const RegistrationConfig& config) {
    if (shape_a.points.size() != shape_a.labels.size() ||
        shape_b.points.size() != shape_b.labels.size())
        throw InputError("labeled point set: point/label count mismatch");

    std::map<int, std::vector<std::uint32_t>> parts_a, parts_b;
    for (std::size_t i = 0; i < shape_a.points.size(); ++i)
        parts_a[shape_a.labels[i]].push_back((std::uint32_t)i);
    for (std::size_t i = 0; i < shape_b.points.size(); ++i)
        parts_b[shape_b.labels[i]].push_back((std::uint32_t)i);

    CorrespondenceSet set;
    bool shared = false;
    for (const auto& [label, idx_a] : parts_a) {
        auto it = parts_b.find(label);
        if (it == parts_b.end()) continue;  // labels in only one shape are skipped
        shared = true;
        const auto& idx_b = it->second;
        std::vector<Vec3> pa, pb;
        pa.reserve(idx_a.size());
        pb.reserve(idx_b.size());
        for (auto i : idx_a) pa.push_back(shape_a.points[i]);
        for (auto i : idx_b) pb.push_back(shape_b.points[i]);

        AffineTransform t = affine_init(pa, pb);
        for (auto& p : pa) p = t.apply(p);
        IcpResult icp = icp_register(pa, pb, config);

        std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
        auto emit = [&](std::uint32_t ga, std::uint32_t gb) {
            if (seen.insert({ga, gb}).second)
                set.push_back({shape_a.shape_id, shape_b.shape_id, ga, gb});
        };
        for (std::size_t i = 0; i < pa.size(); ++i) emit(idx_a[i], idx_b[icp.matches_ab[i]]);
        for (std::size_t i = 0; i < pb.size(); ++i) emit(idx_a[icp.matches_ba[i]], idx_b[i]);
    }
    if (!shared) throw InputError("generate_pair_correspondences: shapes share no labels");
    return set;
}

void save_correspondences_text(const CorrespondenceSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write correspondence file: " + path);
    for (const auto& c : set)
        out << c.shape_a << ' ' << c.index_a << ' ' << c.shape_b << ' ' << c.index_b << '\n';
}

CorrespondenceSet load_correspondences_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open correspondence file: " + path);
    CorrespondenceSet set;
    Correspondence c;
    while (in >> c.shape_a >> c.index_a >> c.shape_b >> c.index_b) set.push_back(c);
    return set;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw InputError("truncated correspondence file");
    return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) | ((std::uint32_t)b[2] << 16) |
           ((std::uint32_t)b[3] << 24);
}

}  // namespace

void save_correspondences_binary(const CorrespondenceSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write correspondence file: " + path);
    std::map<std::string, std::uint32_t> ids;
    std::vector<std::string> table;
    auto intern = [&](const std::string& s) {
        auto [it, fresh] = ids.emplace(s, (std::uint32_t)table.size());
        if (fresh) table.push_back(s);
        return it->second;
    };
    std::vector<std::array<std::uint32_t, 4>> records;
    records.reserve(set.size());
    for (const auto& c : set)
        records.push_back({intern(c.shape_a), c.index_a, intern(c.shape_b), c.index_b});
    out.write("MVDC", 4);
    put_u32(out, (std::uint32_t)table.size());
    for (const auto& s : table) {
        put_u32(out, (std::uint32_t)s.size());
        out.write(s.data(), (std::streamsize)s.size());
    }
    put_u32(out, (std::uint32_t)records.size());
    for (const auto& r : records)
        for (std::uint32_t v : r) put_u32(out, v);
}

CorrespondenceSet load_correspondences_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open correspondence file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MVDC")
        throw InputError(path + ": not a binary correspondence file");
    std::uint32_t nshapes = get_u32(in);
    std::vector<std::string> table(nshapes);
    for (auto& s : table) {
        std::uint32_t len = get_u32(in);
        s.resize(len);
        in.read(s.data(), len);
        if (!in) throw InputError(path + ": truncated string table");
    }
    std::uint32_t n = get_u32(in);
    CorrespondenceSet set;
    set.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::uint32_t a = get_u32(in), ia = get_u32(in), b = get_u32(in), ib = get_u32(in);
        if (a >= table.size() || b >= table.size())
            throw InputError(path + ": shape index out of range");
        set.push_back({table[a], table[b], ia, ib});
    }
    return set;
}

}  // namespace mvdesc
