#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvdesc/evaluation.hpp"
#include "mvdesc/network.hpp"
#include "mvdesc/registration.hpp"
#include "mvdesc/viewselect.hpp"

namespace mvdesc {

struct ManifestEntry {
    std::string shape_id;
    std::string category;
    std::string mesh_path;   // .obj mesh or .xyz point cloud
    std::string label_path;  // optional face-label sidecar
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;

    const ManifestEntry& find(const std::string& shape_id) const;
};

// Lines: "shape <id> <category> <mesh_path> [label_path]", optional
// "seed <n>". Paths are resolved relative to the manifest file.
Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

struct PipelineConfig {
    std::uint64_t seed = 0;
    int workers = 0;  // 0 = runtime default
    ViewConfig view;
    NetworkConfig network;
    RegistrationConfig registration;
    int registration_points = 10000;  // LabeledPointSet size per shape
    TrainOptions train;
    int sample_points = 1024;
    int eval_dense_samples = 256;
    int eval_max_rank = 100;
    CandidateSet eval_candidates = CandidateSet::Both;
    std::vector<double> eval_thresholds;
    double cloud_ball_fraction = 0.02;  // impostor radius as fraction of bounding radius

    PipelineConfig();
};

// Flat "key = value" text with dotted sections; unknown keys are rejected.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config_text(const std::string& text);

// All stage randomness derives from the global seed via stage-name hashing,
// so stages can re-run independently yet reproducibly.
std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stage,
                          const std::string& item = "");

// Caches the per-shape visibility pre-pass and embeds points on demand.
class ShapeEmbedder {
  public:
    ShapeEmbedder(Scene scene, const ViewConfig& view, std::uint64_t seed);

    // Throws ZeroVisibilityError for interior points.
    PointDescriptor embed(std::uint32_t point_id, const DescriptorModel& model) const;
    std::vector<ShadedImage> stack(std::uint32_t point_id) const;
    const Scene& scene() const { return scene_; }
    const VisibilityTable& visibility() const { return visibility_; }

  private:
    Scene scene_;
    ViewConfig view_;
    std::uint64_t seed_;
    std::vector<ViewDirection> dirs_;
    VisibilityTable visibility_;
};

// ---- CLI-level commands (exit-code mapping lives in the binary) ----

void cmd_sample(const Manifest& manifest, const PipelineConfig& config,
                const std::string& out_dir);

struct RegisterStats {
    std::string category;
    int shapes = 0;
    int pairs = 0;
    std::size_t correspondences = 0;
};
// pairs: explicit id pairs, or all within-category pairs when empty.
std::vector<RegisterStats> cmd_register(const Manifest& manifest, const PipelineConfig& config,
                                        const std::vector<std::pair<std::string, std::string>>& pairs,
                                        const std::string& out_dir);

void cmd_train(const Manifest& manifest, const PipelineConfig& config,
               const std::string& correspondence_dir, const std::string& model_path,
               const std::string& loss_csv_path);

struct EmbedRequest {
    int n_samples = 256;
    std::optional<std::string> features_path;
};
void cmd_embed(const Manifest& manifest, const PipelineConfig& config,
               const std::string& model_path, const EmbedRequest& request,
               const std::string& out_dir);

struct EvaluateRequest {
    std::string descriptor_dir;
    std::string features_path;
    std::optional<std::string> symmetry_path;
    bool require_symmetric = false;
};
void cmd_evaluate(const Manifest& manifest, const PipelineConfig& config,
                  const EvaluateRequest& request, const std::string& out_dir);

void cmd_match(const std::string& path_a, const std::string& path_b, const std::string& model_path,
               const PipelineConfig& config, const std::string& out_prefix);

// Registration-stage point sets are regenerated deterministically (not
// persisted); correspondence indices refer to these samples.
LabeledPointSet registration_point_set(const Manifest& manifest, const ManifestEntry& entry,
                                       const PipelineConfig& config);

}  // namespace mvdesc
