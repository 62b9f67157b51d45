#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "scenetok/scene.hpp"
#include "scenetok/tensor.hpp"

// Geometric lifting: project instance points into frames, count visible
// points against the depth buffer, rank views, sample prompt pixels, cut
// multi-level crops, and run the stub segmenter/embedder to produce the
// per-view 2D feature block.

namespace scenetok {

/// Points at or behind this camera-space depth never project.
inline constexpr double kZNear = 1e-4;

struct Projected {
    double u = 0, v = 0;  // pixel coordinates
    double z = 0;         // camera-space depth, meters
};

/// Pinhole projection u = fx*x/z + cx, v = fy*y/z + cy in camera space.
/// Empty when the camera-space depth is <= kZNear.
std::optional<Projected> project_point(const CameraFrame& frame, const Vec3& p);

struct Pixel {
    int u = 0, v = 0;
};

struct VisibleEntry {
    int frame_id = 0;
    std::size_t visible_count = 0;
    std::vector<Pixel> pixels;   // rounded pixel per visible point
    std::vector<double> depths;  // camera-space depth per visible point
};

/// A point is visible when it projects in front of the camera, its rounded
/// pixel lies in bounds, and the depth buffer either has no measurement (0)
/// or agrees with the point's depth within delta_occ.
VisibleEntry visible_points(const CameraFrame& frame, const Scene& scene, int instance_id,
                            double delta_occ);

struct VisibilityReport {
    int instance_id = 0;
    std::vector<VisibleEntry> entries;  // one per scene frame, frame order
};

VisibilityReport visibility_report(const Scene& scene, int instance_id, double delta_occ);

enum class SelectionStatus { ok, unobserved };

struct ViewSelection {
    int instance_id = 0;
    SelectionStatus status = SelectionStatus::ok;
    std::vector<int> frame_ids;  // descending visible count, ties by ascending id
};

/// Top-K frames by visible point count. Frames with zero visible points are
/// never selected; an instance visible nowhere yields an empty selection
/// with status unobserved.
ViewSelection select_top_k_views(const VisibilityReport& report, std::size_t k);
ViewSelection select_top_k_views(const Scene& scene, int instance_id, std::size_t k, double delta_occ);

struct PromptSample {
    int instance_id = 0;
    int frame_id = 0;
    std::vector<Pixel> pixels;
};

/// min(k_sample, visible_count) entries drawn uniformly without replacement.
/// The stream is keyed by (seed, instance_id, frame_id), so results do not
/// depend on the order instances or frames are processed in.
PromptSample sample_prompt_points(const VisibleEntry& entry, int instance_id, std::size_t k_sample,
                                  std::uint64_t seed);

struct BBox {
    double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
};

/// L crops; level l scales the box symmetrically about its center by
/// (1 + l*rho) and clamps to the image. Level 0 is the tight input box.
std::vector<Crop> multi_level_crops(const CameraFrame& frame, const BBox& bbox, std::size_t levels,
                                    double rho);

// --- foundation-model stand-ins --------------------------------------------

struct MaskProposal {
    std::vector<std::uint8_t> mask;  // H*W, row-major
    double confidence = 0.0;         // in [0,1]
};

struct SegmenterContext {
    const Scene* scene = nullptr;
    int instance_id = 0;
    double delta_occ = 0.05;
};

/// (frame, prompt pixels) -> candidate foreground masks. The context carries
/// what a learned segmenter would infer from the prompts; stubs use it, real
/// adapters may ignore it.
class ForegroundSegmenter {
public:
    virtual ~ForegroundSegmenter() = default;
    virtual std::vector<MaskProposal> segment(const CameraFrame& frame, std::span<const Pixel> prompts,
                                              const SegmenterContext& ctx) = 0;
};

/// (rgb crop) -> feature vector of fixed width.
class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed(const CameraFrame& frame, const Crop& crop) = 0;
};

/// Returns the instance's true visible-pixel mask (confidence 1).
std::unique_ptr<ForegroundSegmenter> make_oracle_segmenter();

/// Deterministic pseudo-random unit vector keyed by the crop's pixel bytes.
std::unique_ptr<ImageEmbedder> make_hash_embedder(std::size_t dim);

// --- lifting -----------------------------------------------------------------

struct LiftedFeatures {
    Tensor features;                            // [K, N, D2d]; invalid slots zero
    std::vector<std::vector<std::uint8_t>> valid;  // [K][N]
    std::vector<std::vector<int>> slot_frame;      // [K][N], frame id or -1

    std::size_t valid_count() const;
    Tensor validity_tensor() const;  // [K, N] of 0/1
};

struct LiftConfig {
    std::size_t k_views = 5;
    std::size_t levels = 3;
    std::size_t k_sample = 5;
    double delta_occ = 0.05;
    double rho = 0.5;
    std::uint64_t seed = 0;
};

/// Lifts every instance through its selected views: prompts -> stub mask ->
/// multi-level crops -> embeddings, averaged over levels into one vector per
/// (view slot, instance). Slots beyond an instance's view count stay zero and
/// are marked invalid.
LiftedFeatures lift_instance_features(const Scene& scene, const std::vector<ViewSelection>& selections,
                                      ForegroundSegmenter& segmenter, ImageEmbedder& embedder,
                                      const LiftConfig& cfg);

}  // namespace scenetok
