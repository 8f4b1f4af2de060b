#include "mvdesc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "mvdesc/parallel.hpp"

namespace fs = std::filesystem;

namespace mvdesc {

// ---- workers ----

namespace {
std::atomic<int> g_workers{0};
}

void set_workers(int n) { g_workers.store(n < 0 ? 0 : n); }
int workers() { return g_workers.load(); }

// ---- seeds ----

std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stage,
                          const std::string& item) {
    // FNV-1a over "stage\0item", then mixed with the global seed
    std::uint64_t h = 1469598103934665603ull;
    auto eat = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0;
        h *= 1099511628211ull;
    };
    eat(stage);
    eat(item);
    h ^= global_seed;
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

// ---- manifest ----

const ManifestEntry& Manifest::find(const std::string& shape_id) const {
    for (const auto& e : entries)
        if (e.shape_id == shape_id) return e;
    throw InputError("manifest: unknown shape id '" + shape_id + "'");
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open manifest: " + path);
    fs::path base = fs::path(path).parent_path();
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok) || tok[0] == '#') continue;
        if (tok == "seed") {
            if (!(ss >> m.seed))
                throw InputError(path + ":" + std::to_string(lineno) + ": malformed seed");
        } else if (tok == "shape") {
            ManifestEntry e;
            if (!(ss >> e.shape_id >> e.category >> e.mesh_path))
                throw InputError(path + ":" + std::to_string(lineno) + ": malformed shape record");
            ss >> e.label_path;
            e.mesh_path = (base / e.mesh_path).string();
            if (!e.label_path.empty()) e.label_path = (base / e.label_path).string();
            for (const auto& prev : m.entries)
                if (prev.shape_id == e.shape_id)
                    throw InputError(path + ":" + std::to_string(lineno) + ": duplicate shape id '" +
                                     e.shape_id + "'");
            m.entries.push_back(std::move(e));
        } else {
            throw InputError(path + ":" + std::to_string(lineno) + ": unknown directive '" + tok +
                             "'");
        }
    }
    return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest: " + path);
    out << "seed " << manifest.seed << "\n";
    fs::path base = fs::path(path).parent_path();
    auto rel = [&](const std::string& p) {
        std::error_code ec;
        fs::path r = fs::relative(p, base, ec);
        return ec ? p : r.string();
    };
    for (const auto& e : manifest.entries) {
        out << "shape " << e.shape_id << ' ' << e.category << ' ' << rel(e.mesh_path);
        if (!e.label_path.empty()) out << ' ' << rel(e.label_path);
        out << "\n";
    }
}

// ---- config ----

PipelineConfig::PipelineConfig() {
    for (int i = 1; i <= 25; ++i) eval_thresholds.push_back(0.01 * i);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw InputError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        std::int64_t i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return i;
    } catch (const std::exception&) {
        throw InputError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        std::uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return i;
    } catch (const std::exception&) {
        throw InputError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) out.push_back(trim(part));
    return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& p : split(v, ','))
        if (!p.empty()) out.push_back(parse_double(key, p));
    if (out.empty()) throw InputError("config: empty list for " + key);
    return out;
}

void apply_key(PipelineConfig& c, const std::string& key, const std::string& value) {
    if (key == "seed") c.seed = parse_uint(key, value);
    else if (key == "workers") c.workers = (int)parse_int(key, value);
    else if (key == "view.n_directions") c.view.n_directions = (int)parse_int(key, value);
    else if (key == "view.n_medoids") c.view.n_medoids = (int)parse_int(key, value);
    else if (key == "view.radii") c.view.radii = parse_double_list(key, value);
    else if (key == "view.n_inplane") c.view.n_inplane = (int)parse_int(key, value);
    else if (key == "view.resolution") c.view.resolution = (int)parse_int(key, value);
    else if (key == "view.visibility_distance")
        c.view.visibility_distance = parse_double(key, value);
    else if (key == "view.fov_degrees")
        c.view.vertical_fov = parse_double(key, value) * 3.14159265358979323846 / 180.0;
    else if (key == "network.input_resolution")
        c.network.input_resolution = (int)parse_int(key, value);
    else if (key == "network.convs") {
        c.network.convs.clear();
        for (const auto& spec : split(value, ',')) {
            auto f = split(spec, 'x');
            if (f.size() != 3) throw InputError("config: network.convs entries are out x k x stride");
            c.network.convs.push_back({(int)parse_int(key, f[0]), (int)parse_int(key, f[1]),
                                       (int)parse_int(key, f[2])});
        }
    } else if (key == "network.pools") {
        c.network.pools.clear();
        for (const auto& spec : split(value, ',')) {
            auto f = split(spec, 'x');
            if (f.size() != 2) throw InputError("config: network.pools entries are window x stride");
            c.network.pools.push_back({(int)parse_int(key, f[0]), (int)parse_int(key, f[1])});
        }
    } else if (key == "network.view_descriptor_dim")
        c.network.view_descriptor_dim = (int)parse_int(key, value);
    else if (key == "network.output_dim") c.network.output_dim = (int)parse_int(key, value);
    else if (key == "network.pooling") {
        if (value == "max") c.network.pooling = PoolingMode::Max;
        else if (value == "average") c.network.pooling = PoolingMode::Average;
        else throw InputError("config: network.pooling must be max or average");
    } else if (key == "registration.neighbors")
        c.registration.neighbors = (int)parse_int(key, value);
    else if (key == "registration.smoothness_weight")
        c.registration.smoothness_weight = parse_double(key, value);
    else if (key == "registration.max_iters") c.registration.max_iters = (int)parse_int(key, value);
    else if (key == "registration.tol_fraction")
        c.registration.tol_fraction = parse_double(key, value);
    else if (key == "registration.points") c.registration_points = (int)parse_int(key, value);
    else if (key == "train.iterations") c.train.iterations = (int)parse_int(key, value);
    else if (key == "train.positives_per_batch")
        c.train.positives_per_batch = (int)parse_int(key, value);
    else if (key == "train.negatives_per_batch")
        c.train.negatives_per_batch = (int)parse_int(key, value);
    else if (key == "train.learning_rate") c.train.learning_rate = parse_double(key, value);
    else if (key == "train.weight_decay") c.train.weight_decay = parse_double(key, value);
    else if (key == "train.margin") c.train.margin = parse_double(key, value);
    else if (key == "train.negative_exclusion")
        c.train.negative_exclusion = parse_double(key, value);
    else if (key == "sample_points") c.sample_points = (int)parse_int(key, value);
    else if (key == "eval.dense_samples") c.eval_dense_samples = (int)parse_int(key, value);
    else if (key == "eval.max_rank") c.eval_max_rank = (int)parse_int(key, value);
    else if (key == "eval.candidates") {
        if (value == "dense") c.eval_candidates = CandidateSet::Dense;
        else if (value == "features") c.eval_candidates = CandidateSet::Features;
        else if (value == "both") c.eval_candidates = CandidateSet::Both;
        else throw InputError("config: eval.candidates must be dense, features or both");
    } else if (key == "eval.thresholds")
        c.eval_thresholds = parse_double_list(key, value);
    else if (key == "cloud_ball_fraction") c.cloud_ball_fraction = parse_double(key, value);
    else throw InputError("config: unknown key '" + key + "'");
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
        apply_key(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    c.view.validate();
    c.network.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// ---- shape loading ----

namespace {

bool is_cloud_path(const std::string& p) {
    auto dot = p.rfind('.');
    if (dot == std::string::npos) return false;
    std::string ext = p.substr(dot + 1);
    for (auto& ch : ext) ch = (char)std::tolower((unsigned char)ch);
    return ext == "xyz";
}

// Keeps the geometry alive for the lambdas captured inside the scene; must be
// heap-allocated and never moved after `scene` is built.
struct LoadedShape {
    TriangleMesh mesh;
    std::vector<CloudPoint> cloud;
    bool is_cloud = false;
    Scene scene;
    double diagonal = 0.0;
};

std::vector<PointSample> cloud_samples(const std::vector<CloudPoint>& cloud, std::size_t n,
                                       std::uint64_t seed) {
    std::vector<std::uint32_t> ids(cloud.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = (std::uint32_t)i;
    if (cloud.size() > n) {
        std::mt19937_64 rng(seed);
        std::shuffle(ids.begin(), ids.end(), rng);
        ids.resize(n);
        std::sort(ids.begin(), ids.end());
    }
    std::vector<PointSample> out;
    out.reserve(ids.size());
    for (std::uint32_t i : ids) {
        PointSample s;
        s.position = cloud[i].position;
        s.normal = cloud[i].normal ? *cloud[i].normal : Vec3(0, 0, 1);
        s.face_id = i;
        out.push_back(s);
    }
    return out;
}

std::vector<PointSample> entry_samples(const ManifestEntry& entry, const TriangleMesh* mesh,
                                       const std::vector<CloudPoint>* cloud, std::size_t n,
                                       std::uint64_t seed) {
    if (cloud) return cloud_samples(*cloud, n, seed);
    return area_weighted_sample(*mesh, n, seed);
}

double bbox_diagonal(const std::vector<PointSample>& samples) {
    if (samples.empty()) return 0.0;
    Vec3 lo = samples[0].position, hi = samples[0].position;
    for (const auto& s : samples) {
        lo = lo.cwiseMin(s.position);
        hi = hi.cwiseMax(s.position);
    }
    return (hi - lo).norm();
}

std::unique_ptr<LoadedShape> load_shape(const ManifestEntry& entry, const PipelineConfig& config,
                                        std::size_t n_samples, std::uint64_t sample_seed,
                                        std::vector<PointSample> extra_samples = {}) {
    auto shape = std::make_unique<LoadedShape>();
    shape->is_cloud = is_cloud_path(entry.mesh_path);
    std::vector<PointSample> samples;
    if (shape->is_cloud) {
        shape->cloud = load_xyz(entry.mesh_path);
        if (shape->cloud.empty()) throw InputError("empty point cloud: " + entry.mesh_path);
        samples = cloud_samples(shape->cloud, n_samples, sample_seed);
    } else {
        shape->mesh = load_mesh(entry.mesh_path);
        if (!entry.label_path.empty()) load_face_labels(shape->mesh, entry.label_path);
        shape->mesh.validate();
        samples = area_weighted_sample(shape->mesh, n_samples, sample_seed);
    }
    for (auto& s : extra_samples) samples.push_back(s);
    shape->diagonal = bbox_diagonal(samples);
    if (shape->is_cloud) {
        std::vector<Vec3> pos;
        pos.reserve(shape->cloud.size());
        for (const auto& p : shape->cloud) pos.push_back(p.position);
        double ball = config.cloud_ball_fraction * bounding_sphere(pos).radius;
        shape->scene = make_cloud_scene(shape->cloud, ball, config.view.shading);
        shape->scene.samples = std::move(samples);
        // index renders must cover exactly the chosen samples, not the raw cloud
        const auto& cloud = shape->cloud;
        const auto* sampled = &shape->scene.samples;
        shape->scene.index = [&cloud, sampled, ball](const Camera& cam) {
            std::vector<CloudPoint> pts;
            pts.reserve(sampled->size());
            for (const auto& s : *sampled) pts.push_back({s.position, s.normal});
            IndexMap map = render_index_cloud(pts, cam, ball);
            (void)cloud;
            return map;
        };
    } else {
        shape->scene = make_mesh_scene(shape->mesh, std::move(samples), config.view.shading);
        // rebind so later-appended samples (feature points) are indexed too
        const TriangleMesh& mesh = shape->mesh;
        const auto* sampled = &shape->scene.samples;
        shape->scene.index = [&mesh, sampled](const Camera& cam) {
            return render_index(mesh, *sampled, cam);
        };
    }
    return shape;
}

}  // namespace

// ---- embedder ----

ShapeEmbedder::ShapeEmbedder(Scene scene, const ViewConfig& view, std::uint64_t seed)
    : scene_(std::move(scene)), view_(view), seed_(seed) {
    view_.validate();
    dirs_ = sample_directions(view_.n_directions);
    visibility_ = visible_directions_scene(scene_, dirs_, view_);
}

std::vector<ShadedImage> ShapeEmbedder::stack(std::uint32_t point_id) const {
    if (point_id >= scene_.samples.size())
        throw InputError("embedder: point id out of range");
    ViewStack vs = render_view_stack_scene(scene_, point_id, dirs_,
                                           visibility_.visible[point_id], view_, seed_);
    return std::move(vs.images);
}

PointDescriptor ShapeEmbedder::embed(std::uint32_t point_id, const DescriptorModel& model) const {
    PointDescriptor d;
    d.point_id = point_id;
    d.values = forward_point(stack(point_id), model);
    return d;
}

// ---- registration point sets ----

LabeledPointSet registration_point_set(const Manifest& manifest, const ManifestEntry& entry,
                                       const PipelineConfig& config) {
    std::uint64_t seed =
        derive_seed(manifest.seed != 0 ? manifest.seed : config.seed, "register-sample",
                    entry.shape_id);
    LabeledPointSet set;
    set.shape_id = entry.shape_id;
    if (is_cloud_path(entry.mesh_path)) {
        auto cloud = load_xyz(entry.mesh_path);
        auto samples = cloud_samples(cloud, (std::size_t)config.registration_points, seed);
        for (const auto& s : samples) {
            set.points.push_back(s.position);
            set.labels.push_back(0);
        }
    } else {
        TriangleMesh mesh = load_mesh(entry.mesh_path);
        if (!entry.label_path.empty()) load_face_labels(mesh, entry.label_path);
        mesh.validate();
        auto samples = area_weighted_sample(mesh, (std::size_t)config.registration_points, seed);
        for (const auto& s : samples) {
            set.points.push_back(s.position);
            set.labels.push_back(s.label < 0 ? 0 : s.label);
        }
    }
    return set;
}

// ---- commands ----

void cmd_sample(const Manifest& manifest, const PipelineConfig& config,
                const std::string& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& entry : manifest.entries) {
        std::uint64_t seed = derive_seed(config.seed, "sample", entry.shape_id);
        std::vector<CloudPoint> out;
        if (is_cloud_path(entry.mesh_path)) {
            auto cloud = load_xyz(entry.mesh_path);
            for (const auto& s : cloud_samples(cloud, (std::size_t)config.sample_points, seed))
                out.push_back({s.position, s.normal});
        } else {
            TriangleMesh mesh = load_mesh(entry.mesh_path);
            mesh.validate();
            for (const auto& s :
                 area_weighted_sample(mesh, (std::size_t)config.sample_points, seed))
                out.push_back({s.position, s.normal});
        }
        save_xyz(out, (fs::path(out_dir) / (entry.shape_id + ".xyz")).string());
    }
}

std::vector<RegisterStats> cmd_register(
    const Manifest& manifest, const PipelineConfig& config,
    const std::vector<std::pair<std::string, std::string>>& pairs, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, std::string>> work = pairs;
    if (work.empty()) {
        for (std::size_t i = 0; i < manifest.entries.size(); ++i)
            for (std::size_t j = i + 1; j < manifest.entries.size(); ++j)
                if (manifest.entries[i].category == manifest.entries[j].category)
                    work.emplace_back(manifest.entries[i].shape_id, manifest.entries[j].shape_id);
    }
    if (work.empty()) throw InputError("register: no shape pairs to register");

    std::map<std::string, LabeledPointSet> cache;
    auto points_of = [&](const std::string& id) -> const LabeledPointSet& {
        auto it = cache.find(id);
        if (it == cache.end())
            it = cache.emplace(id, registration_point_set(manifest, manifest.find(id), config))
                     .first;
        return it->second;
    };

    std::map<std::string, RegisterStats> stats;
    std::map<std::string, std::set<std::string>> shapes_seen;
    for (const auto& [a, b] : work) {
        const ManifestEntry& ea = manifest.find(a);
        const ManifestEntry& eb = manifest.find(b);
        if (ea.category != eb.category)
            throw InputError("register: shapes " + a + " and " + b + " are in different categories");
        CorrespondenceSet set =
            generate_pair_correspondences(points_of(a), points_of(b), config.registration);
        save_correspondences_binary(set,
                                    (fs::path(out_dir) / (a + "__" + b + ".mvdc")).string());
        RegisterStats& st = stats[ea.category];
        st.category = ea.category;
        st.pairs += 1;
        st.correspondences += set.size();
        shapes_seen[ea.category].insert(a);
        shapes_seen[ea.category].insert(b);
    }
    std::vector<RegisterStats> out;
    for (auto& [cat, st] : stats) {
        st.shapes = (int)shapes_seen[cat].size();
        out.push_back(st);
    }
    return out;
}

namespace {

// Per-shape state for training: scene over the registration point set, the
// visibility pre-pass, and the subset of points visible from at least one
// direction (the only points the trainer may reference).
struct TrainShape {
    std::unique_ptr<LoadedShape> loaded;
    std::unique_ptr<ShapeEmbedder> embedder;
    std::vector<std::uint32_t> vis_ids;             // trainer id -> scene sample id
    std::map<std::uint32_t, std::uint32_t> to_vis;  // scene sample id -> trainer id
};

}  // namespace

void cmd_train(const Manifest& manifest, const PipelineConfig& config,
               const std::string& correspondence_dir, const std::string& model_path,
               const std::string& loss_csv_path) {
    if (config.view.resolution != config.network.input_resolution)
        throw InputError("train: view.resolution must match network.input_resolution");

    // gather correspondence files
    if (!fs::is_directory(correspondence_dir))
        throw InputError("train: not a directory: " + correspondence_dir);
    std::vector<CorrespondenceSet> sets;
    std::vector<std::string> files;
    for (const auto& de : fs::directory_iterator(correspondence_dir))
        if (de.is_regular_file() && de.path().extension() == ".mvdc")
            files.push_back(de.path().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) sets.push_back(load_correspondences_binary(f));
    if (sets.empty())
        throw InputError("train: no correspondence files in " + correspondence_dir);

    // canonical pair key = (min id, max id); correspondences stored as (a, b)
    std::map<std::pair<std::string, std::string>,
             std::vector<std::pair<std::uint32_t, std::uint32_t>>>
        by_pair;
    for (const auto& set : sets)
        for (const auto& c : set) {
            if (c.shape_a <= c.shape_b)
                by_pair[{c.shape_a, c.shape_b}].emplace_back(c.index_a, c.index_b);
            else
                by_pair[{c.shape_b, c.shape_a}].emplace_back(c.index_b, c.index_a);
        }

    // per-shape scenes over the (regenerated) registration point sets
    std::map<std::string, TrainShape> shapes;
    auto shape_of = [&](const std::string& id) -> TrainShape& {
        auto it = shapes.find(id);
        if (it != shapes.end()) return it->second;
        const ManifestEntry& entry = manifest.find(id);
        std::uint64_t sample_seed =
            derive_seed(manifest.seed != 0 ? manifest.seed : config.seed, "register-sample", id);
        TrainShape ts;
        ts.loaded = load_shape(entry, config, (std::size_t)config.registration_points, sample_seed);
        ts.embedder = std::make_unique<ShapeEmbedder>(ts.loaded->scene, config.view,
                                                      derive_seed(config.seed, "views", id));
        const auto& vis = ts.embedder->visibility().visible;
        for (std::uint32_t i = 0; i < vis.size(); ++i)
            if (!vis[i].empty()) {
                ts.to_vis[i] = (std::uint32_t)ts.vis_ids.size();
                ts.vis_ids.push_back(i);
            }
        if (ts.vis_ids.empty()) throw InputError("train: shape " + id + " has no visible points");
        return shapes.emplace(id, std::move(ts)).first->second;
    };

    TrainingData data;
    for (auto& [key, corr] : by_pair) {
        TrainShape& sa = shape_of(key.first);
        TrainShape& sb = shape_of(key.second);
        RegisteredPair rp;
        rp.shape_a = key.first;
        rp.shape_b = key.second;
        std::set<std::pair<std::uint32_t, std::uint32_t>> dedup;
        for (auto [ia, ib] : corr) {
            auto a = sa.to_vis.find(ia);
            auto b = sb.to_vis.find(ib);
            if (a == sa.to_vis.end() || b == sb.to_vis.end()) continue;  // occluded endpoint
            if (dedup.insert({a->second, b->second}).second)
                rp.correspondences.emplace_back(a->second, b->second);
        }
        if (!rp.correspondences.empty()) data.pairs.push_back(std::move(rp));
    }
    if (data.pairs.empty()) throw InputError("train: no usable correspondences");

    auto stack_cache = std::make_shared<
        std::map<std::pair<std::string, std::uint32_t>, std::vector<ShadedImage>>>();
    data.stack = [&shapes, stack_cache](const std::string& id, std::uint32_t pt) {
        auto key = std::make_pair(id, pt);
        auto it = stack_cache->find(key);
        if (it != stack_cache->end()) return it->second;
        const TrainShape& ts = shapes.at(id);
        auto images = ts.embedder->stack(ts.vis_ids[pt]);
        // cap the cache so long runs over many points stay within memory;
        // dropping entries only costs re-rendering, never changes results
        if (stack_cache->size() >= 1024) stack_cache->clear();
        (*stack_cache)[key] = images;
        return images;
    };
    data.position = [&shapes](const std::string& id, std::uint32_t pt) {
        const TrainShape& ts = shapes.at(id);
        return ts.loaded->scene.samples[ts.vis_ids[pt]].position;
    };
    data.point_count = [&shapes](const std::string& id) {
        return (std::uint32_t)shapes.at(id).vis_ids.size();
    };
    data.diagonal = [&shapes](const std::string& id) { return shapes.at(id).loaded->diagonal; };

    DescriptorModel model =
        DescriptorModel::random_init(config.network, derive_seed(config.seed, "init"));
    TrainOptions options = config.train;
    options.seed = derive_seed(config.seed, "train");
    LossLog log = train(data, model, options);

    if (!model_path.empty()) {
        fs::path mp(model_path);
        if (mp.has_parent_path()) fs::create_directories(mp.parent_path());
        save_model(model, model_path);
    }
    if (!loss_csv_path.empty()) save_loss_log(log, loss_csv_path);
}

void cmd_embed(const Manifest& manifest, const PipelineConfig& config,
               const std::string& model_path, const EmbedRequest& request,
               const std::string& out_dir) {
    if (config.view.resolution != config.network.input_resolution)
        throw InputError("embed: view.resolution must match network.input_resolution");
    DescriptorModel model = load_model(model_path);
    if (model.config.input_resolution != config.view.resolution)
        throw InputError("embed: model input resolution does not match view resolution");
    fs::create_directories(out_dir);

    FeaturePointSet features;
    if (request.features_path) features = load_features(*request.features_path);

    for (const auto& entry : manifest.entries) {
        std::uint64_t seed = derive_seed(config.seed, "embed", entry.shape_id);
        // feature points ride along as extra scene samples so they are
        // rendered exactly at their annotated positions
        std::vector<FeaturePoint> feats;
        auto fit = features.shapes.find(entry.shape_id);
        if (fit != features.shapes.end()) feats = fit->second;

        auto shape = load_shape(entry, config, (std::size_t)request.n_samples, seed);
        std::size_t n_dense = shape->scene.samples.size();
        for (const auto& f : feats) {
            PointSample s;
            s.position = f.position;
            std::vector<Vec3> pos;
            pos.reserve(n_dense);
            for (std::size_t i = 0; i < n_dense; ++i)
                pos.push_back(shape->scene.samples[i].position);
            s.normal = shape->scene.samples[nearest_point(pos, f.position)].normal;
            s.face_id = (std::uint32_t)shape->scene.samples.size();
            shape->scene.samples.push_back(s);
        }

        ShapeEmbedder embedder(shape->scene, config.view,
                               derive_seed(config.seed, "views", entry.shape_id));

        std::vector<PointDescriptor> dense;
        std::vector<CloudPoint> dense_pos;
        for (std::uint32_t i = 0; i < (std::uint32_t)n_dense; ++i) {
            if (embedder.visibility().visible[i].empty()) continue;  // interior point
            PointDescriptor d = embedder.embed(i, model);
            d.shape_id = entry.shape_id;
            dense.push_back(std::move(d));
            dense_pos.push_back({embedder.scene().samples[i].position,
                                 embedder.scene().samples[i].normal});
        }
        if (dense.empty()) throw InputError("embed: shape " + entry.shape_id + " has no visible points");
        save_descriptors(dense, (fs::path(out_dir) / (entry.shape_id + ".desc")).string());
        save_xyz(dense_pos, (fs::path(out_dir) / (entry.shape_id + ".xyz")).string());

        if (!feats.empty()) {
            std::vector<PointDescriptor> fdesc;
            std::ofstream flist(fs::path(out_dir) / (entry.shape_id + "_features.txt"));
            if (!flist) throw InputError("embed: cannot write feature list for " + entry.shape_id);
            flist.precision(9);
            for (std::size_t f = 0; f < feats.size(); ++f) {
                std::uint32_t id = (std::uint32_t)(n_dense + f);
                if (embedder.visibility().visible[id].empty()) continue;
                PointDescriptor d = embedder.embed(id, model);
                d.shape_id = entry.shape_id;
                fdesc.push_back(std::move(d));
                flist << feats[f].feature_id << ' ' << feats[f].position.x() << ' '
                      << feats[f].position.y() << ' ' << feats[f].position.z() << "\n";
            }
            save_descriptors(fdesc,
                             (fs::path(out_dir) / (entry.shape_id + "_features.desc")).string());
        }
    }
}

namespace {

ShapeDescriptors load_shape_descriptors(const std::string& dir, const std::string& shape_id) {
    ShapeDescriptors sd;
    sd.shape_id = shape_id;
    sd.dense = load_descriptors((fs::path(dir) / (shape_id + ".desc")).string());
    auto cloud = load_xyz((fs::path(dir) / (shape_id + ".xyz")).string());
    if (cloud.size() != sd.dense.size())
        throw InputError("evaluate: descriptor/position count mismatch for " + shape_id);
    for (const auto& p : cloud) sd.dense_positions.push_back(p.position);
    for (auto& d : sd.dense) d.shape_id = shape_id;

    fs::path fdesc = fs::path(dir) / (shape_id + "_features.desc");
    fs::path flist = fs::path(dir) / (shape_id + "_features.txt");
    if (fs::exists(fdesc) && fs::exists(flist)) {
        sd.features = load_descriptors(fdesc.string());
        std::ifstream in(flist);
        int fid;
        double x, y, z;
        while (in >> fid >> x >> y >> z) {
            sd.feature_ids.push_back(fid);
            sd.feature_positions.push_back(Vec3(x, y, z));
        }
        if (sd.feature_ids.size() != sd.features.size())
            throw InputError("evaluate: feature descriptor/list mismatch for " + shape_id);
        for (auto& d : sd.features) d.shape_id = shape_id;
    }
    return sd;
}

// Normalizes a shape's positions so its bounding sphere is the unit sphere.
void normalize_shape(ShapeDescriptors& sd) {
    std::vector<Vec3> all = sd.dense_positions;
    all.insert(all.end(), sd.feature_positions.begin(), sd.feature_positions.end());
    BoundingSphere s = bounding_sphere(all);
    double r = s.radius > 0 ? s.radius : 1.0;
    for (auto& p : sd.dense_positions) p = (p - s.center) / r;
    for (auto& p : sd.feature_positions) p = (p - s.center) / r;
}

}  // namespace

void cmd_evaluate(const Manifest& manifest, const PipelineConfig& config,
                  const EvaluateRequest& request, const std::string& out_dir) {
    FeaturePointSet features = load_features(request.features_path);
    if (request.symmetry_path) load_symmetry(features, *request.symmetry_path);
    if (request.require_symmetric && features.symmetry.empty())
        throw InputError("evaluate: symmetric protocol requested but no symmetry map given");
    features.validate();

    std::vector<ShapeDescriptors> shapes;
    for (const auto& entry : manifest.entries) {
        ShapeDescriptors sd = load_shape_descriptors(request.descriptor_dir, entry.shape_id);
        normalize_shape(sd);
        shapes.push_back(std::move(sd));
    }

    fs::create_directories(out_dir);
    EvalOptions options;
    options.max_rank = config.eval_max_rank;
    options.candidates = config.eval_candidates;
    options.thresholds = config.eval_thresholds;

    options.allow_symmetry = false;
    save_curve(cmc_curve(shapes, features, options),
               (fs::path(out_dir) / "cmc.csv").string());
    save_curve(correspondence_accuracy(shapes, features, options),
               (fs::path(out_dir) / "accuracy.csv").string());
    if (!features.symmetry.empty()) {
        options.allow_symmetry = true;
        save_curve(cmc_curve(shapes, features, options),
                   (fs::path(out_dir) / "cmc_symmetric.csv").string());
        save_curve(correspondence_accuracy(shapes, features, options),
                   (fs::path(out_dir) / "accuracy_symmetric.csv").string());
    }
}

void cmd_match(const std::string& path_a, const std::string& path_b, const std::string& model_path,
               const PipelineConfig& config, const std::string& out_prefix) {
    if (config.view.resolution != config.network.input_resolution)
        throw InputError("match: view.resolution must match network.input_resolution");
    DescriptorModel model = load_model(model_path);

    auto embed_all = [&](const std::string& path, const std::string& tag) {
        ManifestEntry entry;
        entry.shape_id = tag;
        entry.category = "match";
        entry.mesh_path = path;
        auto shape = load_shape(entry, config, (std::size_t)config.eval_dense_samples,
                                derive_seed(config.seed, "match", tag));
        ShapeEmbedder embedder(shape->scene, config.view, derive_seed(config.seed, "views", tag));
        std::pair<std::vector<PointDescriptor>, std::vector<Vec3>> out;
        for (std::uint32_t i = 0; i < (std::uint32_t)embedder.scene().samples.size(); ++i) {
            if (embedder.visibility().visible[i].empty()) continue;
            out.first.push_back(embedder.embed(i, model));
            out.second.push_back(embedder.scene().samples[i].position);
        }
        if (out.first.empty()) throw InputError("match: no visible points on " + path);
        return out;
    };

    auto [desc_a, pos_a] = embed_all(path_a, "a");
    auto [desc_b, pos_b] = embed_all(path_b, "b");
    std::vector<ColoredPoint> col_a, col_b;
    dense_match_colors(desc_a, pos_a, desc_b, pos_b, col_a, col_b);
    fs::path prefix(out_prefix);
    if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
    save_colored_points(col_a, out_prefix + "_a.txt");
    save_colored_points(col_b, out_prefix + "_b.txt");
}

}  // namespace mvdesc
