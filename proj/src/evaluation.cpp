#include "mvdesc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mvdesc {

void FeaturePointSet::validate() const {
    for (const auto& [shape, feats] : shapes) {
        std::set<int> seen;
        for (const auto& f : feats)
            if (!seen.insert(f.feature_id).second)
                throw InputError("feature set: duplicate feature id " +
                                 std::to_string(f.feature_id) + " on shape " + shape);
    }
    for (const auto& [a, b] : symmetry) {
        auto it = symmetry.find(b);
        if (it == symmetry.end() || it->second != a)
            throw InputError("feature set: symmetry map is not an involution at id " +
                             std::to_string(a));
    }
}

namespace {

double descriptor_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("descriptor dimension mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

struct Candidate {
    const std::vector<double>* desc;
    Vec3 position;
    int feature_id;  // -1 for dense samples
};

std::vector<Candidate> candidate_list(const ShapeDescriptors& target, CandidateSet which) {
    std::vector<Candidate> out;
    if (which == CandidateSet::Dense || which == CandidateSet::Both)
        for (std::size_t i = 0; i < target.dense.size(); ++i)
            out.push_back({&target.dense[i].values, target.dense_positions[i], -1});
    if (which == CandidateSet::Features || which == CandidateSet::Both)
        for (std::size_t i = 0; i < target.features.size(); ++i)
            out.push_back(
                {&target.features[i].values, target.feature_positions[i], target.feature_ids[i]});
    return out;
}

int feature_slot(const ShapeDescriptors& s, int feature_id) {
    for (std::size_t i = 0; i < s.feature_ids.size(); ++i)
        if (s.feature_ids[i] == feature_id) return (int)i;
    return -1;
}

// Index of the candidate standing in for ground-truth feature `fid`: the
// feature candidate itself when features are ranked, otherwise the candidate
// 3D-nearest to the ground-truth position.
int ground_truth_candidate(const std::vector<Candidate>& cands, const ShapeDescriptors& target,
                           int fid) {
    for (std::size_t i = 0; i < cands.size(); ++i)
        if (cands[i].feature_id == fid) return (int)i;
    int slot = feature_slot(target, fid);
    if (slot < 0) return -1;
    Vec3 gt = target.feature_positions[slot];
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double d = (cands[i].position - gt).squaredNorm();
        if (d < bd) {
            bd = d;
            best = (int)i;
        }
    }
    return best;
}

}  // namespace

EvalCurve cmc_curve(const std::vector<ShapeDescriptors>& shapes, const FeaturePointSet& features,
                    const EvalOptions& options) {
    if (shapes.size() < 2) throw InputError("cmc_curve: need at least two shapes");
    features.validate();
    std::vector<int> rank_hits(options.max_rank + 1, 0);
    std::size_t queries = 0;
    for (const auto& src : shapes) {
        for (const auto& tgt : shapes) {
            if (src.shape_id == tgt.shape_id) continue;
            auto cands = candidate_list(tgt, options.candidates);
            for (std::size_t fi = 0; fi < src.features.size(); ++fi) {
                int fid = src.feature_ids[fi];
                if (feature_slot(tgt, fid) < 0) continue;  // no ground truth on target
                std::vector<double> dist(cands.size());
                for (std::size_t c = 0; c < cands.size(); ++c)
                    dist[c] = descriptor_distance(src.features[fi].values, *cands[c].desc);
                auto rank_of = [&](int ci) {
                    // competitor (min) rank: equal distances share the best rank
                    int r = 1;
                    for (std::size_t c = 0; c < cands.size(); ++c)
                        if (dist[c] < dist[ci]) ++r;
                    return r;
                };
                int gt = ground_truth_candidate(cands, tgt, fid);
                if (gt < 0) continue;
                int rank = rank_of(gt);
                if (options.allow_symmetry) {
                    auto sym = features.symmetry.find(fid);
                    if (sym != features.symmetry.end()) {
                        int gts = ground_truth_candidate(cands, tgt, sym->second);
                        if (gts >= 0) rank = std::min(rank, rank_of(gts));
                    }
                }
                ++queries;
                if (rank <= options.max_rank) ++rank_hits[rank];
            }
        }
    }
    if (queries == 0) throw InputError("cmc_curve: no evaluable feature queries");
    EvalCurve curve;
    curve.metric = "cmc";
    curve.symmetric = options.allow_symmetry;
    int cum = 0;
    for (int r = 1; r <= options.max_rank; ++r) {
        cum += rank_hits[r];
        curve.x.push_back(r);
        curve.y.push_back((double)cum / (double)queries);
    }
    return curve;
}

EvalCurve correspondence_accuracy(const std::vector<ShapeDescriptors>& shapes,
                                  const FeaturePointSet& features, const EvalOptions& options) {
    if (options.thresholds.empty())
        throw InputError("correspondence_accuracy: empty threshold list");
    features.validate();
    std::vector<double> errors;
    for (const auto& src : shapes) {
        for (const auto& tgt : shapes) {
            if (src.shape_id == tgt.shape_id) continue;
            auto cands = candidate_list(tgt, options.candidates);
            if (cands.empty()) continue;
            for (std::size_t fi = 0; fi < src.features.size(); ++fi) {
                int fid = src.feature_ids[fi];
                int slot = feature_slot(tgt, fid);
                if (slot < 0) continue;
                int best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < cands.size(); ++c) {
                    double d = descriptor_distance(src.features[fi].values, *cands[c].desc);
                    if (d < bd) {
                        bd = d;
                        best = (int)c;
                    }
                }
                double err = (cands[best].position - tgt.feature_positions[slot]).norm();
                if (options.allow_symmetry) {
                    auto sym = features.symmetry.find(fid);
                    if (sym != features.symmetry.end()) {
                        int sslot = feature_slot(tgt, sym->second);
                        if (sslot >= 0)
                            err = std::min(
                                err, (cands[best].position - tgt.feature_positions[sslot]).norm());
                    }
                }
                errors.push_back(err);
            }
        }
    }
    if (errors.empty()) throw InputError("correspondence_accuracy: no evaluable feature queries");
    EvalCurve curve;
    curve.metric = "correspondence_accuracy";
    curve.symmetric = options.allow_symmetry;
    curve.normalization = "unit bounding-sphere radius";
    for (double t : options.thresholds) {
        std::size_t hits = 0;
        for (double e : errors)
            if (e <= t) ++hits;
        curve.x.push_back(t);
        curve.y.push_back((double)hits / (double)errors.size());
    }
    return curve;
}

std::vector<std::uint32_t> nearest_match(const std::vector<PointDescriptor>& source,
                                         const std::vector<PointDescriptor>& target) {
    if (source.empty() || target.empty()) throw InputError("nearest_match: empty descriptor set");
    std::vector<std::uint32_t> out(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        std::uint32_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < target.size(); ++j) {
            double d = descriptor_distance(source[i].values, target[j].values);
            if (d < bd) {
                bd = d;
                best = (std::uint32_t)j;
            }
        }
        out[i] = best;
    }
    return out;
}

void dense_match_colors(const std::vector<PointDescriptor>& desc_a, const std::vector<Vec3>& pos_a,
                        const std::vector<PointDescriptor>& desc_b, const std::vector<Vec3>& pos_b,
                        std::vector<ColoredPoint>& colored_a, std::vector<ColoredPoint>& colored_b) {
    if (desc_a.size() != pos_a.size() || desc_b.size() != pos_b.size())
        throw InputError("dense_match_colors: descriptor/position count mismatch");
    Vec3 lo = pos_a[0], hi = pos_a[0];
    for (const auto& p : pos_a) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    Vec3 span = (hi - lo).cwiseMax(1e-12);
    colored_a.resize(pos_a.size());
    for (std::size_t i = 0; i < pos_a.size(); ++i) {
        colored_a[i].position = pos_a[i];
        colored_a[i].rgb = (pos_a[i] - lo).cwiseQuotient(span);
    }
    std::vector<std::uint32_t> match = nearest_match(desc_b, desc_a);
    colored_b.resize(pos_b.size());
    for (std::size_t i = 0; i < pos_b.size(); ++i) {
        colored_b[i].position = pos_b[i];
        colored_b[i].rgb = colored_a[match[i]].rgb;
    }
}

FeaturePointSet load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open feature file: " + path);
    FeaturePointSet set;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string shape;
        FeaturePoint f;
        if (!(ss >> shape)) continue;
        if (!(ss >> f.feature_id >> f.position.x() >> f.position.y() >> f.position.z()))
            throw InputError(path + ":" + std::to_string(lineno) + ": malformed feature record");
        set.shapes[shape].push_back(f);
    }
    return set;
}

void save_features(const FeaturePointSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write feature file: " + path);
    out.precision(9);
    for (const auto& [shape, feats] : set.shapes)
        for (const auto& f : feats)
            out << shape << ' ' << f.feature_id << ' ' << f.position.x() << ' ' << f.position.y()
                << ' ' << f.position.z() << '\n';
}

void load_symmetry(FeaturePointSet& set, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open symmetry file: " + path);
    int a, b;
    while (in >> a >> b) {
        set.symmetry[a] = b;
        set.symmetry[b] = a;
    }
    set.validate();
}

void save_curve(const EvalCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write curve file: " + path);
    out << "# metric=" << curve.metric << " symmetric=" << (curve.symmetric ? 1 : 0);
    if (!curve.normalization.empty()) out << " normalization=" << curve.normalization;
    out << "\nx,y\n";
    out.precision(12);
    for (std::size_t i = 0; i < curve.x.size(); ++i) out << curve.x[i] << ',' << curve.y[i] << '\n';
}

void save_colored_points(const std::vector<ColoredPoint>& points, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write colored point file: " + path);
    out.precision(9);
    for (const auto& p : points)
        out << p.position.x() << ' ' << p.position.y() << ' ' << p.position.z() << ' ' << p.rgb.x()
            << ' ' << p.rgb.y() << ' ' << p.rgb.z() << '\n';
}

}  // namespace mvdesc
