#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "mvdesc/network.hpp"

namespace mvdesc {

namespace {

struct PairIndex {
    std::set<std::pair<std::uint32_t, std::uint32_t>> corr_set;
    // one ground-truth partner per source point, for false-negative rejection
    std::map<std::uint32_t, std::uint32_t> partner_ab;
};

}  // namespace

LossLog train(const TrainingData& data, DescriptorModel& model, const TrainOptions& options) {
    if (data.pairs.empty()) throw InputError("train: no registered shape pairs");
    std::size_t total_corr = 0;
    for (const auto& p : data.pairs) total_corr += p.correspondences.size();
    if (total_corr < (std::size_t)options.positives_per_batch)
        throw InputError("train: fewer correspondences than one batch of positives");

    std::vector<PairIndex> index(data.pairs.size());
    for (std::size_t p = 0; p < data.pairs.size(); ++p) {
        for (const auto& [a, b] : data.pairs[p].correspondences) {
            index[p].corr_set.insert({a, b});
            index[p].partner_ab.emplace(a, b);
        }
    }

    std::mt19937_64 rng(options.seed);
    TrainState state = TrainState::init(model);
    state.learning_rate = options.learning_rate;
    state.weight_decay = options.weight_decay;
    state.margin = options.margin;

    // (shape, point) -> slot in batch.points, rebuilt per iteration
    LossLog log;
    for (int iter = 0; iter < options.iterations; ++iter) {
        TrainingBatch batch;
        std::map<std::pair<std::string, std::uint32_t>, int> slot;
        auto point_slot = [&](const std::string& shape, std::uint32_t pt) {
            auto [it, fresh] = slot.emplace(std::make_pair(shape, pt), (int)batch.points.size());
            if (fresh) batch.points.push_back({data.stack(shape, pt)});
            return it->second;
        };

        std::uniform_int_distribution<std::size_t> pair_dist(0, data.pairs.size() - 1);
        for (int i = 0; i < options.positives_per_batch; ++i) {
            const auto& rp = data.pairs[pair_dist(rng)];
            if (rp.correspondences.empty()) {
                --i;
                continue;
            }
            std::uniform_int_distribution<std::size_t> cd(0, rp.correspondences.size() - 1);
            auto [a, b] = rp.correspondences[cd(rng)];
            batch.positives.emplace_back(point_slot(rp.shape_a, a), point_slot(rp.shape_b, b));
        }
        for (int i = 0; i < options.negatives_per_batch; ++i) {
            std::size_t pi = pair_dist(rng);
            const auto& rp = data.pairs[pi];
            std::uint32_t na = data.point_count(rp.shape_a);
            std::uint32_t nb = data.point_count(rp.shape_b);
            std::uniform_int_distribution<std::uint32_t> da(0, na - 1), db(0, nb - 1);
            bool placed = false;
            for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
                std::uint32_t a = da(rng), b = db(rng);
                if (index[pi].corr_set.count({a, b})) continue;
                auto it = index[pi].partner_ab.find(a);
                if (it != index[pi].partner_ab.end()) {
                    Vec3 gt = data.position(rp.shape_b, it->second);
                    double diag = data.diagonal(rp.shape_b);
                    if ((data.position(rp.shape_b, b) - gt).norm() <
                        options.negative_exclusion * diag)
                        continue;  // too close to the true correspondence
                }
                batch.negatives.emplace_back(point_slot(rp.shape_a, a), point_slot(rp.shape_b, b));
                placed = true;
            }
        }

        Gradients grads = zero_gradients(model);
        double loss = backward(batch, model, state.margin, state.weight_decay, grads);
        adam_step(state, model, grads);
        log.loss.push_back(loss);
    }
    return log;
}

}  // namespace mvdesc
