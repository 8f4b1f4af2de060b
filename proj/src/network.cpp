#include "mvdesc/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "mvdesc/parallel.hpp"

namespace mvdesc {

Tensor Tensor::zeros(std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    t.data.assign(n, 0.0);
    return t;
}

void NetworkConfig::validate() const {
    if (convs.size() != pools.size())
        throw InputError("network config: convs and pools must pair up");
    if (input_resolution < 1) throw InputError("network config: bad input resolution");
    if (output_dim < 16 || output_dim > 512)
        throw InputError("network config: output_dim must be in [16, 512]");
    int side = input_resolution;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        side = (side - convs[i].kernel) / convs[i].stride + 1;
        if (side < 1) throw InputError("network config: conv stage shrinks image below 1 px");
        side = (side - pools[i].window) / pools[i].stride + 1;
        if (side < 1) throw InputError("network config: pool stage shrinks image below 1 px");
    }
    if (view_descriptor_dim < 1) throw InputError("network config: bad view_descriptor_dim");
}

int NetworkConfig::flat_dim_after_stages() const {
    int side = input_resolution;
    int channels = 1;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        side = (side - convs[i].kernel) / convs[i].stride + 1;
        side = (side - pools[i].window) / pools[i].stride + 1;
        channels = convs[i].out_channels;
    }
    return channels * side * side;
}

DescriptorModel DescriptorModel::random_init(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    DescriptorModel model;
    model.config = config;
    std::mt19937_64 rng(seed);
    auto he = [&](Tensor& t, int fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (auto& v : t.data) v = dist(rng);
    };
    int in_c = 1;
    for (const auto& c : config.convs) {
        Tensor w = Tensor::zeros({c.out_channels, in_c, c.kernel, c.kernel});
        he(w, in_c * c.kernel * c.kernel);
        model.params.push_back(std::move(w));
        model.params.push_back(Tensor::zeros({c.out_channels}));
        in_c = c.out_channels;
    }
    int flat = config.flat_dim_after_stages();
    Tensor fcw = Tensor::zeros({config.view_descriptor_dim, flat});
    he(fcw, flat);
    model.params.push_back(std::move(fcw));
    model.params.push_back(Tensor::zeros({config.view_descriptor_dim}));
    Tensor red = Tensor::zeros({config.output_dim, config.view_descriptor_dim});
    he(red, config.view_descriptor_dim);
    model.params.push_back(std::move(red));
    return model;
}

Gradients zero_gradients(const DescriptorModel& model) {
    Gradients g;
    g.reserve(model.params.size());
    for (const auto& p : model.params) g.push_back(Tensor::zeros(p.shape));
    return g;
}

namespace {

struct FeatureMap {
    int channels = 0, side = 0;
    std::vector<double> data;  // [c][y][x]

    void resize(int c, int s) {
        channels = c;
        side = s;
        data.assign((std::size_t)c * s * s, 0.0);
    }
    double& at(int c, int y, int x) { return data[((std::size_t)c * side + y) * side + x]; }
    double at(int c, int y, int x) const { return data[((std::size_t)c * side + y) * side + x]; }
};

void conv_forward(const FeatureMap& in, const Tensor& w, const Tensor& b, int stride,
                  FeatureMap& out) {
    const int oc = w.shape[0], ic = w.shape[1], k = w.shape[2];
    const int os = (in.side - k) / stride + 1;
    out.resize(oc, os);
    for (int o = 0; o < oc; ++o) {
        const double* wbase = &w.data[(std::size_t)o * ic * k * k];
        for (int y = 0; y < os; ++y)
            for (int x = 0; x < os; ++x) {
                double acc = b.data[o];
                for (int c = 0; c < ic; ++c) {
                    const double* wrow = wbase + (std::size_t)c * k * k;
                    for (int ky = 0; ky < k; ++ky) {
                        const double* irow = &in.data[((std::size_t)c * in.side + y * stride + ky) *
                                                          in.side +
                                                      x * stride];
                        for (int kx = 0; kx < k; ++kx) acc += wrow[ky * k + kx] * irow[kx];
                    }
                }
                out.at(o, y, x) = acc;
            }
    }
}

void conv_backward(const FeatureMap& in, const Tensor& w, int stride, const FeatureMap& gout,
                   FeatureMap& gin, Tensor& gw, Tensor& gb) {
    const int oc = w.shape[0], ic = w.shape[1], k = w.shape[2];
    const int os = gout.side;
    gin.resize(in.channels, in.side);
    for (int o = 0; o < oc; ++o) {
        const double* wbase = &w.data[(std::size_t)o * ic * k * k];
        double* gwbase = &gw.data[(std::size_t)o * ic * k * k];
        for (int y = 0; y < os; ++y)
            for (int x = 0; x < os; ++x) {
                double g = gout.at(o, y, x);
                if (g == 0.0) continue;
                gb.data[o] += g;
                for (int c = 0; c < ic; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            double iv = in.at(c, y * stride + ky, x * stride + kx);
                            gwbase[((std::size_t)c * k + ky) * k + kx] += g * iv;
                            gin.at(c, y * stride + ky, x * stride + kx) +=
                                g * wbase[((std::size_t)c * k + ky) * k + kx];
                        }
            }
    }
}

void relu_forward(FeatureMap& m) {
    for (auto& v : m.data) v = v > 0.0 ? v : 0.0;
}

void pool_forward(const FeatureMap& in, int window, int stride, FeatureMap& out,
                  std::vector<int>& argmax) {
    const int os = (in.side - window) / stride + 1;
    out.resize(in.channels, os);
    argmax.assign(out.data.size(), 0);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < os; ++y)
            for (int x = 0; x < os; ++x) {
                double best = -std::numeric_limits<double>::infinity();
                int bi = 0;
                for (int wy = 0; wy < window; ++wy)
                    for (int wx = 0; wx < window; ++wx) {
                        int iy = y * stride + wy, ix = x * stride + wx;
                        double v = in.at(c, iy, ix);
                        if (v > best) {
                            best = v;
                            bi = iy * in.side + ix;
                        }
                    }
                out.at(c, y, x) = best;
                argmax[((std::size_t)c * os + y) * os + x] = bi;
            }
}

struct ViewActivations {
    std::vector<FeatureMap> conv_in;    // input to each conv stage
    std::vector<FeatureMap> conv_out;   // post-conv pre-relu
    std::vector<FeatureMap> relu_out;   // post-relu (pool input)
    std::vector<FeatureMap> pool_out;   // post-pool
    std::vector<std::vector<int>> pool_argmax;
    std::vector<double> fc_pre;  // pre-relu fc output
};

void image_to_map(const ShadedImage& img, FeatureMap& m) {
    m.resize(1, img.resolution);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) m.data[i] = img.pixels[i];
}

std::vector<double> view_forward_impl(const ShadedImage& image, const DescriptorModel& model,
                                      ViewActivations& acts) {
    const auto& cfg = model.config;
    if (image.resolution != cfg.input_resolution)
        throw InputError("forward_view: image resolution " + std::to_string(image.resolution) +
                         " does not match network input " + std::to_string(cfg.input_resolution));
    const std::size_t n_stages = cfg.convs.size();
    acts.conv_in.resize(n_stages);
    acts.conv_out.resize(n_stages);
    acts.relu_out.resize(n_stages);
    acts.pool_out.resize(n_stages);
    acts.pool_argmax.resize(n_stages);

    FeatureMap cur;
    image_to_map(image, cur);
    for (std::size_t s = 0; s < n_stages; ++s) {
        acts.conv_in[s] = cur;
        conv_forward(acts.conv_in[s], model.params[2 * s], model.params[2 * s + 1],
                     cfg.convs[s].stride, acts.conv_out[s]);
        acts.relu_out[s] = acts.conv_out[s];
        relu_forward(acts.relu_out[s]);
        pool_forward(acts.relu_out[s], cfg.pools[s].window, cfg.pools[s].stride, acts.pool_out[s],
                     acts.pool_argmax[s]);
        cur = acts.pool_out[s];
    }
    const Tensor& fcw = model.params[2 * n_stages];
    const Tensor& fcb = model.params[2 * n_stages + 1];
    const int flat = fcw.shape[1];
    acts.fc_pre.assign(cfg.view_descriptor_dim, 0.0);
    for (int o = 0; o < cfg.view_descriptor_dim; ++o) {
        double acc = fcb.data[o];
        const double* wrow = &fcw.data[(std::size_t)o * flat];
        for (int i = 0; i < flat; ++i) acc += wrow[i] * cur.data[i];
        acts.fc_pre[o] = acc;
    }
    std::vector<double> y(cfg.view_descriptor_dim);
    for (int o = 0; o < cfg.view_descriptor_dim; ++o) y[o] = std::max(0.0, acts.fc_pre[o]);
    return y;
}

void view_backward_impl(const DescriptorModel& model, const ViewActivations& acts,
                        const std::vector<double>& grad_y, Gradients& grads) {
    const auto& cfg = model.config;
    const std::size_t n_stages = cfg.convs.size();
    const Tensor& fcw = model.params[2 * n_stages];
    Tensor& gfcw = grads[2 * n_stages];
    Tensor& gfcb = grads[2 * n_stages + 1];
    const int flat = fcw.shape[1];

    const FeatureMap& fc_in = acts.pool_out.back();
    FeatureMap gcur;
    gcur.resize(fc_in.channels, fc_in.side);
    for (int o = 0; o < cfg.view_descriptor_dim; ++o) {
        double g = acts.fc_pre[o] > 0.0 ? grad_y[o] : 0.0;  // relu
        if (g == 0.0) continue;
        gfcb.data[o] += g;
        const double* wrow = &fcw.data[(std::size_t)o * flat];
        double* gwrow = &gfcw.data[(std::size_t)o * flat];
        for (int i = 0; i < flat; ++i) {
            gwrow[i] += g * fc_in.data[i];
            gcur.data[i] += g * wrow[i];
        }
    }
    for (std::size_t s = n_stages; s-- > 0;) {
        // pool backward: gradient flows to the argmax entry
        const FeatureMap& pin = acts.relu_out[s];
        FeatureMap gpin;
        gpin.resize(pin.channels, pin.side);
        const auto& argmax = acts.pool_argmax[s];
        for (std::size_t i = 0; i < gcur.data.size(); ++i) {
            if (gcur.data[i] == 0.0) continue;
            int c = (int)(i / ((std::size_t)gcur.side * gcur.side));
            gpin.data[(std::size_t)c * pin.side * pin.side + argmax[i]] += gcur.data[i];
        }
        // relu backward
        for (std::size_t i = 0; i < gpin.data.size(); ++i)
            if (acts.conv_out[s].data[i] <= 0.0) gpin.data[i] = 0.0;
        FeatureMap gin;
        conv_backward(acts.conv_in[s], model.params[2 * s], cfg.convs[s].stride, gpin, gin,
                      grads[2 * s], grads[2 * s + 1]);
        gcur = std::move(gin);
    }
}

}  // namespace

std::vector<double> forward_view(const ShadedImage& image, const DescriptorModel& model) {
    ViewActivations acts;
    return view_forward_impl(image, model, acts);
}

std::vector<double> view_pool(const std::vector<std::vector<double>>& view_descriptors,
                              PoolingMode mode) {
    if (view_descriptors.empty()) throw InputError("view_pool: empty view set");
    const std::size_t dim = view_descriptors[0].size();
    for (const auto& v : view_descriptors)
        if (v.size() != dim) throw InputError("view_pool: descriptor dimension mismatch");
    std::vector<double> out(dim);
    if (mode == PoolingMode::Max) {
        out = view_descriptors[0];
        for (std::size_t v = 1; v < view_descriptors.size(); ++v)
            for (std::size_t i = 0; i < dim; ++i)
                out[i] = std::max(out[i], view_descriptors[v][i]);
    } else {
        for (std::size_t i = 0; i < dim; ++i) {
            double acc = 0.0;
            for (const auto& v : view_descriptors) acc += v[i];
            out[i] = acc / (double)view_descriptors.size();
        }
    }
    return out;
}

std::vector<double> reduce(const std::vector<double>& pooled, const DescriptorModel& model) {
    const Tensor& w = model.reduction();
    if ((int)pooled.size() != w.shape[1]) throw InputError("reduce: dimension mismatch");
    std::vector<double> x(w.shape[0], 0.0);
    for (int o = 0; o < w.shape[0]; ++o) {
        const double* row = &w.data[(std::size_t)o * w.shape[1]];
        double acc = 0.0;
        for (int i = 0; i < w.shape[1]; ++i) acc += row[i] * pooled[i];
        x[o] = acc;
    }
    return x;
}

std::vector<double> forward_point(const std::vector<ShadedImage>& views,
                                  const DescriptorModel& model) {
    if (views.empty()) throw InputError("forward_point: empty view stack");
    std::vector<std::vector<double>> ys(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) ys[v] = forward_view(views[v], model);
    return reduce(view_pool(ys, model.config.pooling), model);
}

ContrastiveResult contrastive_loss(const std::vector<double>& x_a, const std::vector<double>& x_b,
                                   bool is_corresponding, double margin) {
    if (x_a.size() != x_b.size()) throw InputError("contrastive_loss: dimension mismatch");
    const std::size_t n = x_a.size();
    ContrastiveResult res;
    res.grad_a.assign(n, 0.0);
    res.grad_b.assign(n, 0.0);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x_a[i] - x_b[i];
        d2 += d * d;
    }
    if (is_corresponding) {
        res.loss = d2;
        for (std::size_t i = 0; i < n; ++i) {
            res.grad_a[i] = 2.0 * (x_a[i] - x_b[i]);
            res.grad_b[i] = -res.grad_a[i];
        }
    } else {
        double d = std::sqrt(d2);
        if (d < margin) {
            double diff = margin - d;
            res.loss = diff * diff;
            if (d > 0.0) {
                double scale = -2.0 * diff / d;
                for (std::size_t i = 0; i < n; ++i) {
                    res.grad_a[i] = scale * (x_a[i] - x_b[i]);
                    res.grad_b[i] = -res.grad_a[i];
                }
            }
            // at d == 0 the subgradient 0 is used
        }
    }
    return res;
}

namespace {

struct PointForward {
    std::vector<std::vector<double>> view_descs;
    std::vector<double> pooled;
    std::vector<double> x;
};

PointForward forward_point_full(const BatchPoint& point, const DescriptorModel& model) {
    PointForward f;
    f.view_descs.resize(point.views.size());
    for (std::size_t v = 0; v < point.views.size(); ++v)
        f.view_descs[v] = forward_view(point.views[v], model);
    f.pooled = view_pool(f.view_descs, model.config.pooling);
    f.x = reduce(f.pooled, model);
    return f;
}

// Backward of one point given dL/dX_p; per-view activations are recomputed.
void backward_point(const BatchPoint& point, const PointForward& fwd,
                    const std::vector<double>& grad_x, const DescriptorModel& model,
                    Gradients& grads) {
    const Tensor& w = model.reduction();
    Tensor& gw = grads.back();
    const int out_dim = w.shape[0], vdd = w.shape[1];
    std::vector<double> grad_pooled(vdd, 0.0);
    for (int o = 0; o < out_dim; ++o) {
        if (grad_x[o] == 0.0) continue;
        const double* row = &w.data[(std::size_t)o * vdd];
        double* grow = &gw.data[(std::size_t)o * vdd];
        for (int i = 0; i < vdd; ++i) {
            grow[i] += grad_x[o] * fwd.pooled[i];
            grad_pooled[i] += grad_x[o] * row[i];
        }
    }
    const std::size_t n_views = point.views.size();
    std::vector<std::vector<double>> grad_views(n_views);
    if (model.config.pooling == PoolingMode::Max) {
        // route each coordinate to its first argmax in view-id order
        for (int i = 0; i < vdd; ++i) {
            if (grad_pooled[i] == 0.0) continue;
            std::size_t arg = 0;
            double best = fwd.view_descs[0][i];
            for (std::size_t v = 1; v < n_views; ++v)
                if (fwd.view_descs[v][i] > best) {
                    best = fwd.view_descs[v][i];
                    arg = v;
                }
            if (grad_views[arg].empty()) grad_views[arg].assign(vdd, 0.0);
            grad_views[arg][i] += grad_pooled[i];
        }
    } else {
        for (std::size_t v = 0; v < n_views; ++v) {
            grad_views[v].assign(vdd, 0.0);
            for (int i = 0; i < vdd; ++i)
                grad_views[v][i] = grad_pooled[i] / (double)n_views;
        }
    }
    for (std::size_t v = 0; v < n_views; ++v) {
        if (grad_views[v].empty()) continue;
        ViewActivations acts;
        view_forward_impl(point.views[v], model, acts);
        view_backward_impl(model, acts, grad_views[v], grads);
    }
}

void check_finite(const std::vector<double>& x, const char* where) {
    for (double v : x)
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite value in ") + where);
}

}  // namespace

double backward(const TrainingBatch& batch, const DescriptorModel& model, double margin,
                double weight_decay, Gradients& grads) {
    const std::size_t n_points = batch.points.size();
    std::vector<PointForward> fwd(n_points);

    // fixed-size chunks so merged float sums do not depend on the worker count
    const std::size_t chunk = 16;
    const std::size_t n_chunks = n_points == 0 ? 0 : (n_points + chunk - 1) / chunk;

    parallel_for(n_points, [&](std::size_t i) {
        fwd[i] = forward_point_full(batch.points[i], model);
        check_finite(fwd[i].x, "point descriptor");
    });

    double loss = 0.0;
    std::vector<std::vector<double>> grad_x(n_points);
    for (std::size_t i = 0; i < n_points; ++i)
        grad_x[i].assign(model.config.output_dim, 0.0);
    auto accumulate_pair = [&](const std::pair<int, int>& pr, bool positive) {
        ContrastiveResult r = contrastive_loss(fwd[pr.first].x, fwd[pr.second].x, positive, margin);
        loss += r.loss;
        for (int i = 0; i < model.config.output_dim; ++i) {
            grad_x[pr.first][i] += r.grad_a[i];
            grad_x[pr.second][i] += r.grad_b[i];
        }
    };
    for (const auto& pr : batch.positives) accumulate_pair(pr, true);
    for (const auto& pr : batch.negatives) accumulate_pair(pr, false);

    std::vector<Gradients> partial(n_chunks);
    parallel_for(n_chunks, [&](std::size_t ci) {
        partial[ci] = zero_gradients(model);
        std::size_t lo = ci * chunk, hi = std::min(n_points, lo + chunk);
        for (std::size_t i = lo; i < hi; ++i)
            backward_point(batch.points[i], fwd[i], grad_x[i], model, partial[ci]);
    });
    for (std::size_t ci = 0; ci < n_chunks; ++ci)
        for (std::size_t p = 0; p < grads.size(); ++p)
            for (std::size_t j = 0; j < grads[p].size(); ++j)
                grads[p][j] += partial[ci][p][j];

    // regularizer lambda * ||w||^2 over every parameter
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        const auto& t = model.params[p];
        for (std::size_t j = 0; j < t.size(); ++j) {
            grads[p][j] += 2.0 * weight_decay * t[j];
            loss += weight_decay * t[j] * t[j];
        }
    }
    return loss;
}

TrainState TrainState::init(const DescriptorModel& model) {
    TrainState s;
    for (const auto& p : model.params) {
        s.m.push_back(Tensor::zeros(p.shape));
        s.v.push_back(Tensor::zeros(p.shape));
    }
    return s;
}

void adam_step(TrainState& state, DescriptorModel& model, const Gradients& grads) {
    if (grads.size() != model.params.size()) throw InputError("adam_step: gradient shape mismatch");
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, (double)state.step);
    const double bc2 = 1.0 - std::pow(b2, (double)state.step);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        auto& w = model.params[p].data;
        auto& m = state.m[p].data;
        auto& v = state.v[p].data;
        const auto& g = grads[p].data;
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            w[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

// ---- serialization ----

namespace {

void write_config(std::ostream& out, const NetworkConfig& c) {
    out << "input_resolution " << c.input_resolution << "\n";
    out << "stages " << c.convs.size() << "\n";
    for (std::size_t i = 0; i < c.convs.size(); ++i)
        out << "conv " << c.convs[i].out_channels << ' ' << c.convs[i].kernel << ' '
            << c.convs[i].stride << " pool " << c.pools[i].window << ' ' << c.pools[i].stride
            << "\n";
    out << "view_descriptor_dim " << c.view_descriptor_dim << "\n";
    out << "output_dim " << c.output_dim << "\n";
    out << "pooling " << (c.pooling == PoolingMode::Max ? "max" : "average") << "\n";
    out << "end\n";
}

NetworkConfig read_config(std::istream& in) {
    NetworkConfig c;
    c.convs.clear();
    c.pools.clear();
    std::string key;
    while (in >> key) {
        if (key == "end") break;
        if (key == "input_resolution") in >> c.input_resolution;
        else if (key == "stages") {
            std::size_t n;
            in >> n;
        } else if (key == "conv") {
            ConvSpec cs{};
            PoolSpec ps{};
            std::string ptag;
            in >> cs.out_channels >> cs.kernel >> cs.stride >> ptag >> ps.window >> ps.stride;
            if (ptag != "pool") throw InputError("model file: malformed conv stage");
            c.convs.push_back(cs);
            c.pools.push_back(ps);
        } else if (key == "view_descriptor_dim") in >> c.view_descriptor_dim;
        else if (key == "output_dim") in >> c.output_dim;
        else if (key == "pooling") {
            std::string mode;
            in >> mode;
            c.pooling = mode == "average" ? PoolingMode::Average : PoolingMode::Max;
        } else {
            throw InputError("model file: unknown config key '" + key + "'");
        }
        if (!in) throw InputError("model file: truncated config block");
    }
    if (key != "end") throw InputError("model file: missing config terminator");
    return c;
}

}  // namespace

void save_model(const DescriptorModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write model file: " + path);
    out << "MVDM\n";
    write_config(out, model.config);
    for (const auto& t : model.params) {
        std::uint32_t nd = (std::uint32_t)t.shape.size();
        out.write(reinterpret_cast<const char*>(&nd), 4);
        for (int d : t.shape) {
            std::uint32_t dd = (std::uint32_t)d;
            out.write(reinterpret_cast<const char*>(&dd), 4);
        }
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  (std::streamsize)(t.data.size() * sizeof(double)));
    }
}

DescriptorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open model file: " + path);
    std::string magic;
    in >> magic;
    if (magic != "MVDM") throw InputError(path + ": bad magic (not a model file)");
    NetworkConfig config = read_config(in);
    in.get();  // newline after "end"
    DescriptorModel model = DescriptorModel::random_init(config, 0);
    for (std::size_t p = 0; p < model.params.size(); ++p) {
        std::uint32_t nd = 0;
        in.read(reinterpret_cast<char*>(&nd), 4);
        if (!in || nd != model.params[p].shape.size())
            throw InputError(path + ": malformed tensor header (parameter " + std::to_string(p) +
                             ")");
        for (int d : model.params[p].shape) {
            std::uint32_t dd = 0;
            in.read(reinterpret_cast<char*>(&dd), 4);
            if (!in || dd != (std::uint32_t)d)
                throw InputError(path + ": tensor shape mismatch (parameter " + std::to_string(p) +
                                 ")");
        }
        in.read(reinterpret_cast<char*>(model.params[p].data.data()),
                (std::streamsize)(model.params[p].data.size() * sizeof(double)));
        if (!in)
            throw InputError(path + ": truncated tensor data (parameter " + std::to_string(p) +
                             ")");
    }
    return model;
}

void save_descriptors(const std::vector<PointDescriptor>& descs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write descriptor file: " + path);
    out << "MVDS\n";
    std::uint32_t count = (std::uint32_t)descs.size();
    std::uint32_t dim = descs.empty() ? 0 : (std::uint32_t)descs[0].values.size();
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    for (const auto& d : descs) {
        if (d.values.size() != dim) throw InputError("save_descriptors: dimension mismatch");
        for (double v : d.values) {
            float f = (float)v;  // descriptors persist in 32-bit
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
}

std::vector<PointDescriptor> load_descriptors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open descriptor file: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != "MVDS") throw InputError(path + ": bad magic (not a descriptor file)");
    std::uint32_t count = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    in.read(reinterpret_cast<char*>(&dim), 4);
    if (!in) throw InputError(path + ": truncated header");
    std::vector<PointDescriptor> descs(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        descs[i].point_id = i;
        descs[i].values.resize(dim);
        for (std::uint32_t j = 0; j < dim; ++j) {
            float f = 0;
            in.read(reinterpret_cast<char*>(&f), 4);
            if (!in) throw InputError(path + ": truncated descriptor data");
            descs[i].values[j] = f;
        }
    }
    return descs;
}

void save_loss_log(const LossLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write loss log: " + path);
    out << "iteration,loss\n";
    out.precision(12);
    for (std::size_t i = 0; i < log.loss.size(); ++i) out << i << ',' << log.loss[i] << '\n';
}

}  // namespace mvdesc
