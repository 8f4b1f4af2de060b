#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvdesc/geometry.hpp"

namespace mvdesc {

struct LabeledPointSet {
    std::string shape_id;
    std::vector<Vec3> points;
    std::vector<int> labels;  // one per point
};

struct AffineTransform {
    Mat3 linear = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return linear * p + translation; }
};

using DeformationField = std::vector<Vec3>;  // per-point offsets

struct EnergyReport {
    int iteration = 0;
    double data_a_to_b = 0.0;
    double data_b_to_a = 0.0;
    double smooth_a = 0.0;
    double smooth_b = 0.0;
    double total() const { return data_a_to_b + data_b_to_a + smooth_a + smooth_b; }
};

struct Correspondence {
    std::string shape_a, shape_b;
    std::uint32_t index_a = 0, index_b = 0;
};

using CorrespondenceSet = std::vector<Correspondence>;

struct RegistrationConfig {
    int neighbors = 6;             // k-NN graph size
    double smoothness_weight = 1;  // scale on the offset-difference terms
    int max_iters = 30;
    double tol_fraction = 1e-5;  // stop when energy decrease < tol_fraction * initial energy
};

// Maps partA's oriented-bounding-box frame onto partB's (per-axis scaling by
// extent ratios, ratio 1 where an extent vanishes).
AffineTransform affine_init(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b);

// One inner solve of the deformation energy with correspondences held fixed.
// matches_ab[i] = index into part_b of part_a point i's current closest
// compatible point (and vice versa). The per-axis normal equations are sparse
// SPD; solved by conjugate gradient to relative residual 1e-8.
void solve_offsets(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b,
                   const std::vector<std::uint32_t>& matches_ab,
                   const std::vector<std::uint32_t>& matches_ba, const NeighborGraph& graph_a,
                   const NeighborGraph& graph_b, double smoothness_weight, DeformationField& off_a,
                   DeformationField& off_b, EnergyReport& report);

struct IcpResult {
    DeformationField offsets_a, offsets_b;
    std::vector<std::uint32_t> matches_ab;  // final closest compatible points
    std::vector<std::uint32_t> matches_ba;
    std::vector<EnergyReport> energy;
    bool converged = true;
};

// Alternates solve_offsets with closest-point updates. part_a must already be
// in the post-affine frame. Internally normalizes so part_b fits the unit
// cube; offsets are reported in the input frame.
IcpResult icp_register(const std::vector<Vec3>& part_a, const std::vector<Vec3>& part_b,
                       const RegistrationConfig& config = {});

// Per-shared-label affine init + ICP; concatenates per-part correspondences
// (indices into the full point sets of A and B).
CorrespondenceSet generate_pair_correspondences(const LabeledPointSet& shape_a,
                                                const LabeledPointSet& shape_b,
                                                const RegistrationConfig& config = {});

// Text format: one "shapeA_id idxA shapeB_id idxB" per line.
void save_correspondences_text(const CorrespondenceSet& set, const std::string& path);
CorrespondenceSet load_correspondences_text(const std::string& path);

// Binary format: magic "MVDC", string table of shape ids, then little-endian
// 32-bit records (shapeA, idxA, shapeB, idxB) with shape ids as table indices.
void save_correspondences_binary(const CorrespondenceSet& set, const std::string& path);
CorrespondenceSet load_correspondences_binary(const std::string& path);

}  // namespace mvdesc
