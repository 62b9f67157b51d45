#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scenetok/isr.hpp"
#include "scenetok/mcmf.hpp"
#include "scenetok/param_store.hpp"
#include "scenetok/projection.hpp"
#include "scenetok/scene.hpp"

// End-to-end driver: synthetic RGB-D scenes, the stub encoders, the full
// lift -> fuse -> relate forward pass, token accounting, and the ablation
// runner. All file formats are versioned JSON.

namespace scenetok {

// --- synthetic scenes --------------------------------------------------------

struct SynthConfig {
    std::uint64_t seed = 0;
    std::size_t n_instances = 4;
    std::size_t n_frames = 6;
    std::size_t points_per_instance = 60;
    int width = 48;
    int height = 48;
};

/// Instances are axis-aligned point boxes at non-overlapping random centers;
/// cameras sit on a ring looking at the scene center; depth images come from
/// splatting the points (nearest depth wins a pixel). Deterministic in the
/// seed. Throws if placement keeps colliding after bounded retries.
Scene synth_scene(const SynthConfig& cfg);

/// Variant with every camera aimed away from the scene, so nothing projects.
/// Exercises the unobserved-instance path end to end.
Scene synth_scene_unobserved(const SynthConfig& cfg);

// --- configuration -----------------------------------------------------------

enum class Fusion { full, concat, parallel, cross_attention };

const char* fusion_name(Fusion f);
Fusion fusion_from_name(const std::string& name);

struct PipelineConfig {
    std::size_t k_views = 5;
    std::size_t levels = 3;
    std::size_t k_sample = 5;
    std::size_t d = 48;
    std::size_t d3d = 96;
    std::size_t d2d = 80;
    std::size_t heads = 4;
    Aggregation aggregation = Aggregation::cls_token;
    Fusion fusion = Fusion::full;
    SpatialMode spatial_mode = SpatialMode::full;
    AggregateOver aggregate_over = AggregateOver::self;
    std::size_t n_scene_tokens = 1;
    std::size_t isr_layers = 2;
    std::size_t isr_heads = 4;
    std::uint64_t data_seed = 0;
    std::uint64_t param_seed = 0;
    double delta_occ = 0.05;
    double rho = 0.5;

    void validate() const;
    McmfConfig mcmf() const;
    IsrConfig isr() const;
    LiftConfig lift() const;
};

/// Parses a config file that mirrors PipelineConfig field-for-field; missing
/// fields take defaults, unknown keys are rejected.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const std::string& json_text);
std::string pipeline_config_to_json(const PipelineConfig& cfg);
void save_pipeline_config(const PipelineConfig& cfg, const std::filesystem::path& path);

/// Registers every parameter the configured pipeline (and its fusion
/// baselines) can touch, so checkpoints cover all ablation variants.
void init_pipeline_params(ParamStore& ps, const PipelineConfig& cfg);

// --- named-tensor container --------------------------------------------------

struct NamedTensors {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::int64_t> meta;
};

void save_named_tensors(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, Tensor>>& tensors,
                        const std::map<std::string, std::int64_t>& meta = {});
NamedTensors load_named_tensors(const std::filesystem::path& path);

// --- pipeline ----------------------------------------------------------------

/// Deterministic stand-in for a learned point-cloud encoder: unit vector per
/// instance keyed by the instance's point bytes. Returns [N, d3d].
Tensor stub_point_features(const Scene& scene, std::size_t d3d);

struct TokenBundle {
    Tensor instance_tokens;  // [N, D]
    Tensor scene_tokens;     // [n_scene_tokens, D]
    std::size_t token_count = 0;
};

void save_bundle(const TokenBundle& bundle, const std::filesystem::path& path);
TokenBundle load_bundle(const std::filesystem::path& path);

struct StageTiming {
    std::string name;
    std::string detail;  // output shapes, human-readable
    double ms = 0.0;
};

struct ReportCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunReport {
    int schema_version = 1;
    std::size_t n_instances = 0;
    std::size_t instance_tokens = 0;
    std::size_t scene_tokens = 0;
    std::size_t total_tokens = 0;
    // Analytic token counts for the baseline schemes on the same scene.
    std::size_t baseline_separate = 0;       // 6N
    std::size_t baseline_parallel = 0;       // 3N
    std::size_t baseline_cross_attention = 0;  // 2N
    std::vector<int> unobserved;  // instance ids with no visible view
    std::vector<StageTiming> stages;
    std::vector<ReportCheck> checks;

    bool all_checks_pass() const;
    std::string to_json() const;
    void save(const std::filesystem::path& path) const;
};

struct PipelineResult {
    TokenBundle bundle;
    RunReport report;
    McmfTrace trace;  // populated when keep_trace
};

PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& cfg, ParamStore& ps,
                            bool keep_trace = false);

// --- ablation ----------------------------------------------------------------

struct AblationVariant {
    std::string name;
    PipelineConfig cfg;
};

struct AblationRow {
    std::string name;
    std::string fusion;
    std::size_t total_tokens = 0;
    double mean_token_norm = 0.0;
    double cosine_spread = 0.0;          // stddev of pairwise token cosines
    double rotation_sensitivity = 0.0;   // scene-token shift under centroid rotation
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::string to_json() const;
    void save(const std::filesystem::path& path) const;
};

/// Runs each variant on the same scene with a fresh, identically seeded
/// parameter store and reports output-space probes side by side.
AblationReport ablate(const Scene& scene, const std::vector<AblationVariant>& variants);

struct AblationGrid {
    SynthConfig scene;
    std::vector<AblationVariant> variants;
};

/// grid.json: {"scene": {...}, "base": {<config overrides>},
/// "variants": [{"name": ..., "fusion": ..., <config overrides>}, ...]}.
AblationGrid load_ablation_grid(const std::filesystem::path& path);

}  // namespace scenetok
