#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mvdesc/geometry.hpp"
#include "mvdesc/render.hpp"

namespace mvdesc {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    static Tensor zeros(std::vector<int> shape);
    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

enum class PoolingMode { Max, Average };

struct ConvSpec {
    int out_channels;
    int kernel;
    int stride = 1;
};

struct PoolSpec {
    int window;
    int stride;
};

// Per-view stack: [conv / relu / pool] stages, a fully-connected layer with a
// rectifier producing the view descriptor, then the learned reduction matrix
// applied after view pooling.
struct NetworkConfig {
    int input_resolution = 64;
    std::vector<ConvSpec> convs = {{8, 5, 1}, {16, 5, 1}};
    std::vector<PoolSpec> pools = {{2, 2}, {2, 2}};
    int view_descriptor_dim = 256;
    int output_dim = 128;
    PoolingMode pooling = PoolingMode::Max;

    void validate() const;
    // spatial side length and channel count after stage i (i = convs.size()
    // gives the flattened fc input)
    int flat_dim_after_stages() const;
};

// Learnable parameters in declaration order:
//   conv_i weights [out,in,k,k], conv_i bias [out], fc weights, fc bias,
//   reduction matrix W [output_dim, view_descriptor_dim].
struct DescriptorModel {
    NetworkConfig config;
    std::vector<Tensor> params;

    static DescriptorModel random_init(const NetworkConfig& config, std::uint64_t seed);
    Tensor& reduction() { return params.back(); }
    const Tensor& reduction() const { return params.back(); }
};

using Gradients = std::vector<Tensor>;  // shapes mirror model.params
Gradients zero_gradients(const DescriptorModel& model);

struct PointDescriptor {
    std::string shape_id;
    std::uint32_t point_id = 0;
    std::vector<double> values;  // output_dim entries
};

// Deterministic forward pass of one view image through the conv/fc stack;
// the image resolution must match config.input_resolution.
std::vector<double> forward_view(const ShadedImage& image, const DescriptorModel& model);

// Element-wise max (or mean) across view descriptors. The views are reduced
// in the order given; callers pass them in ascending view-id order so that
// argmax tie-breaking (first occurrence) is permutation-invariant.
std::vector<double> view_pool(const std::vector<std::vector<double>>& view_descriptors,
                              PoolingMode mode);

std::vector<double> reduce(const std::vector<double>& pooled, const DescriptorModel& model);

// Full per-point forward: sorts views by id, runs the view stack, pools,
// reduces.
std::vector<double> forward_point(const std::vector<ShadedImage>& views,
                                  const DescriptorModel& model);

struct ContrastiveResult {
    double loss = 0.0;
    std::vector<double> grad_a, grad_b;
};
ContrastiveResult contrastive_loss(const std::vector<double>& x_a, const std::vector<double>& x_b,
                                   bool is_corresponding, double margin);

// One side of a siamese pair: the id-ordered view images of one point.
struct BatchPoint {
    std::vector<ShadedImage> views;
};

struct TrainingBatch {
    std::vector<BatchPoint> points;
    std::vector<std::pair<int, int>> positives;  // indices into points
    std::vector<std::pair<int, int>> negatives;
};

// Exact gradient of sum of batch losses + weight_decay * ||w||^2 over all
// parameters (siamese branches share weights; contributions are summed).
// Returns the batch loss including the regularizer.
double backward(const TrainingBatch& batch, const DescriptorModel& model, double margin,
                double weight_decay, Gradients& grads);

struct TrainState {
    std::vector<Tensor> m, v;  // Adam moments, shapes mirror params
    std::int64_t step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0005;
    double margin = 1.0;

    static TrainState init(const DescriptorModel& model);
};

void adam_step(TrainState& state, DescriptorModel& model, const Gradients& grads);

// Model file: magic "MVDM", text config block, parameter tensors as
// little-endian 64-bit floats in declaration order.
void save_model(const DescriptorModel& model, const std::string& path);
DescriptorModel load_model(const std::string& path);

// Descriptor file: magic "MVDS", count, dimension, count*dim 32-bit floats.
void save_descriptors(const std::vector<PointDescriptor>& descs, const std::string& path);
std::vector<PointDescriptor> load_descriptors(const std::string& path);

// ---- training loop over registered shape pairs ----

struct RegisteredPair {
    std::string shape_a, shape_b;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> correspondences;
};

// Callbacks let the trainer stay independent of rendering; the pipeline
// supplies a caching view-stack provider.
struct TrainingData {
    std::vector<RegisteredPair> pairs;
    std::function<std::vector<ShadedImage>(const std::string&, std::uint32_t)> stack;
    std::function<Vec3(const std::string&, std::uint32_t)> position;
    std::function<std::uint32_t(const std::string&)> point_count;
    std::function<double(const std::string&)> diagonal;  // bounding-box diagonal
};

struct TrainOptions {
    int iterations = 500;
    int positives_per_batch = 32;
    int negatives_per_batch = 32;
    double learning_rate = 1e-4;
    double weight_decay = 0.0005;
    double margin = 1.0;
    // negatives closer than this fraction of the target shape's diagonal to
    // the true correspondence are rejected as false negatives
    double negative_exclusion = 0.05;
    std::uint64_t seed = 0;
};

struct LossLog {
    std::vector<double> loss;  // one entry per iteration
};

LossLog train(const TrainingData& data, DescriptorModel& model, const TrainOptions& options);

void save_loss_log(const LossLog& log, const std::string& path);

}  // namespace mvdesc
