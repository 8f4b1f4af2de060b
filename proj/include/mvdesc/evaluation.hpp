#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mvdesc/geometry.hpp"
#include "mvdesc/network.hpp"

namespace mvdesc {

struct FeaturePoint {
    int feature_id = 0;
    Vec3 position;
};

struct FeaturePointSet {
    // per-shape annotated feature points; ids consistent across shapes
    std::map<std::string, std::vector<FeaturePoint>> shapes;
    // feature id -> symmetric partner (its own inverse)
    std::map<int, int> symmetry;

    void validate() const;
};

struct EvalCurve {
    std::string metric;  // "cmc" or "correspondence_accuracy"
    bool symmetric = false;
    std::string normalization;  // e.g. "unit bounding-sphere radius"
    std::vector<double> x;
    std::vector<double> y;  // fractions, non-decreasing
};

// Per-shape descriptor sets for evaluation: dense surface samples plus the
// annotated feature points, each with 3D positions.
struct ShapeDescriptors {
    std::string shape_id;
    std::vector<PointDescriptor> dense;       // candidate points
    std::vector<Vec3> dense_positions;
    std::vector<PointDescriptor> features;    // aligned with feature_ids
    std::vector<int> feature_ids;
    std::vector<Vec3> feature_positions;
};

// Candidate set used when ranking: the dense samples, the target features,
// or both.
enum class CandidateSet { Dense, Features, Both };

struct EvalOptions {
    bool allow_symmetry = false;
    int max_rank = 100;
    CandidateSet candidates = CandidateSet::Both;
    std::vector<double> thresholds;  // for correspondence accuracy
};

EvalCurve cmc_curve(const std::vector<ShapeDescriptors>& shapes, const FeaturePointSet& features,
                    const EvalOptions& options);

// Princeton protocol: nearest candidate in descriptor space, 3D error against
// the ground-truth position. Positions must be pre-normalized to a common
// scale (curve metadata records the normalization).
EvalCurve correspondence_accuracy(const std::vector<ShapeDescriptors>& shapes,
                                  const FeaturePointSet& features, const EvalOptions& options);

// Exact per-source nearest target index under Euclidean descriptor distance,
// ties by lower index.
std::vector<std::uint32_t> nearest_match(const std::vector<PointDescriptor>& source,
                                         const std::vector<PointDescriptor>& target);

struct ColoredPoint {
    Vec3 position;
    Vec3 rgb;  // components in [0,1]
};

// Colors shape A by a fixed position-derived colormap and transfers colors to
// B through nearest-descriptor matching.
void dense_match_colors(const std::vector<PointDescriptor>& desc_a,
                        const std::vector<Vec3>& pos_a,
                        const std::vector<PointDescriptor>& desc_b,
                        const std::vector<Vec3>& pos_b, std::vector<ColoredPoint>& colored_a,
                        std::vector<ColoredPoint>& colored_b);

// Feature file: "shape_id feature_id x y z" per line.
FeaturePointSet load_features(const std::string& path);
void save_features(const FeaturePointSet& set, const std::string& path);
// Symmetry file: "feature_id symmetric_feature_id" per line.
void load_symmetry(FeaturePointSet& set, const std::string& path);

// Curve CSV with a "# metric=..." metadata header comment.
void save_curve(const EvalCurve& curve, const std::string& path);

void save_colored_points(const std::vector<ColoredPoint>& points, const std::string& path);

}  // namespace mvdesc
