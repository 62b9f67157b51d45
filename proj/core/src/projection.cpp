#include "scenetok/projection.hpp"

#include <algorithm>
#include <cmath>

#include "scenetok/rng.hpp"

namespace scenetok {

std::optional<Projected> project_point(const CameraFrame& frame, const Vec3& p) {
    const Vec3 cam = frame.to_camera(p);
    if (!(cam[2] > kZNear)) return std::nullopt;
    Projected out;
    out.u = frame.fx * cam[0] / cam[2] + frame.cx;
    out.v = frame.fy * cam[1] / cam[2] + frame.cy;
    out.z = cam[2];
    return out;
}

VisibleEntry visible_points(const CameraFrame& frame, const Scene& scene, int instance_id,
                            double delta_occ) {
    const InstanceProposal& inst = scene.instance(instance_id);
    VisibleEntry entry;
    entry.frame_id = frame.id;
    for (std::size_t i = 0; i < inst.mask.size(); ++i) {
        if (!inst.mask[i]) continue;
        const auto proj = project_point(frame, scene.points[i].position);
        if (!proj) continue;
        const long u = std::lround(proj->u);
        const long v = std::lround(proj->v);
        if (u < 0 || u >= frame.width || v < 0 || v >= frame.height) continue;
        const double buf = frame.depth_at(static_cast<int>(u), static_cast<int>(v));
        if (buf != 0.0 && std::abs(proj->z - buf) > delta_occ) continue;
        entry.pixels.push_back({static_cast<int>(u), static_cast<int>(v)});
        entry.depths.push_back(proj->z);
    }
    entry.visible_count = entry.pixels.size();
    return entry;
}

VisibilityReport visibility_report(const Scene& scene, int instance_id, double delta_occ) {
    VisibilityReport report;
    report.instance_id = instance_id;
    report.entries.reserve(scene.frames.size());
    for (const CameraFrame& f : scene.frames) {
        report.entries.push_back(visible_points(f, scene, instance_id, delta_occ));
    }
    return report;
}

ViewSelection select_top_k_views(const VisibilityReport& report, std::size_t k) {
    if (k == 0) throw InvariantError("select_top_k_views: K must be >= 1");
    std::vector<const VisibleEntry*> ranked;
    for (const VisibleEntry& e : report.entries) {
        if (e.visible_count > 0) ranked.push_back(&e);
    }
    std::sort(ranked.begin(), ranked.end(), [](const VisibleEntry* a, const VisibleEntry* b) {
        if (a->visible_count != b->visible_count) return a->visible_count > b->visible_count;
        return a->frame_id < b->frame_id;
    });
    ViewSelection sel;
    sel.instance_id = report.instance_id;
    for (std::size_t i = 0; i < ranked.size() && i < k; ++i) sel.frame_ids.push_back(ranked[i]->frame_id);
    sel.status = sel.frame_ids.empty() ? SelectionStatus::unobserved : SelectionStatus::ok;
    return sel;
}

ViewSelection select_top_k_views(const Scene& scene, int instance_id, std::size_t k, double delta_occ) {
    return select_top_k_views(visibility_report(scene, instance_id, delta_occ), k);
}

PromptSample sample_prompt_points(const VisibleEntry& entry, int instance_id, std::size_t k_sample,
                                  std::uint64_t seed) {
    if (entry.visible_count == 0) {
        throw InvariantError("sample_prompt_points: no visible points for instance " +
                             std::to_string(instance_id) + " in frame " + std::to_string(entry.frame_id));
    }
    rng::SplitMix sm(rng::mix(seed, static_cast<std::uint64_t>(instance_id),
                              static_cast<std::uint64_t>(entry.frame_id)));
    const std::size_t n = entry.pixels.size();
    const std::size_t take = std::min(k_sample, n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + sm.next_below(n - i);
        std::swap(idx[i], idx[j]);
    }
    PromptSample out;
    out.instance_id = instance_id;
    out.frame_id = entry.frame_id;
    for (std::size_t i = 0; i < take; ++i) out.pixels.push_back(entry.pixels[idx[i]]);
    return out;
}

std::vector<Crop> multi_level_crops(const CameraFrame& frame, const BBox& bbox, std::size_t levels,
                                    double rho) {
    if (levels == 0) throw InvariantError("multi_level_crops: L must be >= 1");
    if (!(bbox.u_min < bbox.u_max) || !(bbox.v_min < bbox.v_max)) {
        throw InvariantError("multi_level_crops: degenerate bbox");
    }
    if (bbox.u_min < 0 || bbox.v_min < 0 || bbox.u_max > frame.width || bbox.v_max > frame.height) {
        throw InvariantError("multi_level_crops: bbox outside image bounds");
    }
    const double cu = 0.5 * (bbox.u_min + bbox.u_max);
    const double cv = 0.5 * (bbox.v_min + bbox.v_max);
    const double hw = 0.5 * (bbox.u_max - bbox.u_min);
    const double hh = 0.5 * (bbox.v_max - bbox.v_min);
    std::vector<Crop> crops;
    crops.reserve(levels);
    for (std::size_t l = 0; l < levels; ++l) {
        const double f = 1.0 + static_cast<double>(l) * rho;
        Crop c;
        c.frame_id = frame.id;
        c.level = static_cast<int>(l);
        c.u_min = std::max(0.0, cu - hw * f);
        c.v_min = std::max(0.0, cv - hh * f);
        c.u_max = std::min(static_cast<double>(frame.width), cu + hw * f);
        c.v_max = std::min(static_cast<double>(frame.height), cv + hh * f);
        crops.push_back(c);
    }
    return crops;
}

// --------------------------------------------------------------------------
// stubs
// --------------------------------------------------------------------------

namespace {

class OracleSegmenter final : public ForegroundSegmenter {
public:
    std::vector<MaskProposal> segment(const CameraFrame& frame, std::span<const Pixel>,
                                      const SegmenterContext& ctx) override {
        if (ctx.scene == nullptr) {
            throw InvariantError("oracle segmenter needs a scene in the context");
        }
        const VisibleEntry entry = visible_points(frame, *ctx.scene, ctx.instance_id, ctx.delta_occ);
        MaskProposal prop;
        prop.mask.assign(static_cast<std::size_t>(frame.width) * frame.height, 0);
        for (const Pixel& px : entry.pixels) {
            prop.mask[static_cast<std::size_t>(px.v) * frame.width + px.u] = 1;
        }
        prop.confidence = 1.0;
        return {prop};
    }
};

class HashEmbedder final : public ImageEmbedder {
public:
    explicit HashEmbedder(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const override { return dim_; }

    std::vector<double> embed(const CameraFrame& frame, const Crop& crop) override {
        // hash the quantized pixels of the crop window plus its geometry
        const int u0 = static_cast<int>(std::floor(crop.u_min));
        const int v0 = static_cast<int>(std::floor(crop.v_min));
        const int u1 = static_cast<int>(std::ceil(crop.u_max));
        const int v1 = static_cast<int>(std::ceil(crop.v_max));
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto feed = [&h](const void* p, std::size_t n) { h = rng::fnv1a(p, n, h); };
        const int geom[4] = {u0, v0, u1, v1};
        feed(geom, sizeof(geom));
        for (int v = v0; v < v1; ++v) {
            for (int u = u0; u < u1; ++u) {
                if (u < 0 || u >= frame.width || v < 0 || v >= frame.height) continue;
                unsigned char px[3];
                for (int c = 0; c < 3; ++c) {
                    px[c] = static_cast<unsigned char>(std::lround(frame.rgb_at(u, v, c) * 255.0));
                }
                feed(px, sizeof(px));
            }
        }
        rng::SplitMix sm(h);
        std::vector<double> e(dim_);
        double sq = 0.0;
        for (double& x : e) {
            x = sm.next_normal();
            sq += x * x;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (double& x : e) x *= inv;
        return e;
    }

private:
    std::size_t dim_;
};

}  // namespace

std::unique_ptr<ForegroundSegmenter> make_oracle_segmenter() {
    return std::make_unique<OracleSegmenter>();
}

std::unique_ptr<ImageEmbedder> make_hash_embedder(std::size_t dim) {
    return std::make_unique<HashEmbedder>(dim);
}

// --------------------------------------------------------------------------
// lifting
// --------------------------------------------------------------------------

std::size_t LiftedFeatures::valid_count() const {
    std::size_t n = 0;
    for (const auto& row : valid) {
        for (std::uint8_t v : row) n += (v != 0);
    }
    return n;
}

Tensor LiftedFeatures::validity_tensor() const {
    const std::size_t k = valid.size();
    const std::size_t n = k ? valid[0].size() : 0;
    Tensor t({std::max<std::size_t>(k, 1), std::max<std::size_t>(n, 1)});
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < n; ++b) t.at(a, b) = valid[a][b] ? 1.0 : 0.0;
    }
    return t;
}

namespace {

std::optional<BBox> mask_bbox(const std::vector<std::uint8_t>& mask, int width, int height) {
    int u0 = width, v0 = height, u1 = -1, v1 = -1;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            if (!mask[static_cast<std::size_t>(v) * width + u]) continue;
            u0 = std::min(u0, u);
            v0 = std::min(v0, v);
            u1 = std::max(u1, u);
            v1 = std::max(v1, v);
        }
    }
    if (u1 < 0) return std::nullopt;
    // half-open box around the lit pixels; never degenerate for >=1 pixel
    return BBox{static_cast<double>(u0), static_cast<double>(v0), static_cast<double>(u1 + 1),
                static_cast<double>(v1 + 1)};
}

}  // namespace

LiftedFeatures lift_instance_features(const Scene& scene, const std::vector<ViewSelection>& selections,
                                      ForegroundSegmenter& segmenter, ImageEmbedder& embedder,
                                      const LiftConfig& cfg) {
    const std::size_t n = selections.size();
    const std::size_t k = cfg.k_views;
    const std::size_t d = embedder.dim();
    if (n == 0 || k == 0) throw InvariantError("lift_instance_features: need >=1 instance and K >= 1");

    LiftedFeatures out;
    out.features = Tensor({k, n, d});
    out.valid.assign(k, std::vector<std::uint8_t>(n, 0));
    out.slot_frame.assign(k, std::vector<int>(n, -1));

    for (std::size_t i = 0; i < n; ++i) {
        const ViewSelection& sel = selections[i];
        for (std::size_t slot = 0; slot < sel.frame_ids.size() && slot < k; ++slot) {
            const int frame_id = sel.frame_ids[slot];
            const std::string where =
                "instance " + std::to_string(sel.instance_id) + ", frame " + std::to_string(frame_id);
            try {
                const CameraFrame& frame = scene.frame(frame_id);
                const VisibleEntry entry = visible_points(frame, scene, sel.instance_id, cfg.delta_occ);
                const PromptSample prompts =
                    sample_prompt_points(entry, sel.instance_id, cfg.k_sample, cfg.seed);

                SegmenterContext ctx{&scene, sel.instance_id, cfg.delta_occ};
                auto proposals = segmenter.segment(frame, prompts.pixels, ctx);
                if (proposals.empty()) throw InvariantError("segmenter returned no mask proposals");
                const MaskProposal* best = &proposals[0];
                for (const MaskProposal& p : proposals) {
                    if (p.confidence > best->confidence) best = &p;
                }
                const auto bbox = mask_bbox(best->mask, frame.width, frame.height);
                if (!bbox) throw InvariantError("segmenter mask is empty");

                const std::vector<Crop> crops = multi_level_crops(frame, *bbox, cfg.levels, cfg.rho);
                std::vector<double> acc(d, 0.0);
                for (const Crop& crop : crops) {
                    const std::vector<double> e = embedder.embed(frame, crop);
                    if (e.size() != d) throw InvariantError("embedder returned wrong width");
                    for (std::size_t c = 0; c < d; ++c) acc[c] += e[c];
                }
                const double inv = 1.0 / static_cast<double>(crops.size());
                for (std::size_t c = 0; c < d; ++c) out.features.at(slot, i, c) = acc[c] * inv;
                out.valid[slot][i] = 1;
                out.slot_frame[slot][i] = frame_id;
            } catch (const std::exception& e) {
                throw InvariantError("lift_instance_features failed at " + where + ": " + e.what());
            }
        }
    }
    return out;
}

}  // namespace scenetok
