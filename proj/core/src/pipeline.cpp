#include "scenetok/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scenetok/rng.hpp"

namespace scenetok {

using nlohmann::json;

// --- synthetic scenes --------------------------------------------------------

namespace {

constexpr double kRingRadius = 8.0;
constexpr double kRingHeight = 1.5;
constexpr double kHalfExtent = 0.35;
constexpr double kMinSeparation = 1.1;
constexpr int kPlacementRetries = 1000;

std::array<double, 16> look_at_pose(const Vec3& eye, const Vec3& target) {
    Vec3 z = normalized(target - eye);
    Vec3 up{0, 0, 1};
    Vec3 x = cross(z, up);
    if (norm(x) < 1e-9) x = cross(z, Vec3{0, 1, 0});
    x = normalized(x);
    Vec3 y = cross(z, x);  // image-down; x,y,z right-handed
    const Vec3 rows[3] = {x, y, z};
    std::array<double, 16> pose{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) pose[r * 4 + c] = rows[r][c];
        pose[r * 4 + 3] = -dot(rows[r], eye);
    }
    pose[15] = 1.0;
    return pose;
}

Scene synth_scene_impl(const SynthConfig& cfg, bool look_away) {
    if (cfg.n_instances == 0 || cfg.n_frames == 0 || cfg.points_per_instance == 0) {
        throw std::invalid_argument("synth_scene: counts must be >= 1");
    }
    if (cfg.width <= 0 || cfg.height <= 0) {
        throw std::invalid_argument("synth_scene: image size must be positive");
    }

    Scene scene;
    rng::SplitMix place(rng::mix(cfg.seed, rng::fnv1a("synth.place")));

    std::vector<Vec3> centers;
    for (std::size_t i = 0; i < cfg.n_instances; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
            Vec3 c{place.next_double() * 4.4 - 2.2, place.next_double() * 4.4 - 2.2,
                   place.next_double() * 1.6 - 0.8};
            placed = std::all_of(centers.begin(), centers.end(),
                                 [&](const Vec3& o) { return norm(c - o) >= kMinSeparation; });
            if (placed) centers.push_back(c);
        }
        if (!placed) {
            throw std::runtime_error("synth_scene: no non-overlapping spot for instance " +
                                     std::to_string(i) + " after " +
                                     std::to_string(kPlacementRetries) + " tries");
        }
    }

    for (std::size_t i = 0; i < cfg.n_instances; ++i) {
        rng::SplitMix pts(rng::mix(cfg.seed, rng::fnv1a("synth.points"), i));
        Vec3 base_color{0.15 + 0.8 * pts.next_double(), 0.15 + 0.8 * pts.next_double(),
                        0.15 + 0.8 * pts.next_double()};
        for (std::size_t p = 0; p < cfg.points_per_instance; ++p) {
            Point pt;
            for (int a = 0; a < 3; ++a) {
                pt.position[a] = centers[i][a] + (pts.next_double() * 2.0 - 1.0) * kHalfExtent;
                pt.color[a] = std::clamp(base_color[a] + (pts.next_double() - 0.5) * 0.1, 0.0, 1.0);
            }
            scene.points.push_back(pt);
        }
        InstanceProposal inst;
        inst.id = static_cast<int>(i);
        inst.mask.assign(cfg.n_instances * cfg.points_per_instance, 0);
        for (std::size_t p = 0; p < cfg.points_per_instance; ++p) {
            inst.mask[i * cfg.points_per_instance + p] = 1;
        }
        scene.instances.push_back(std::move(inst));
    }

    for (std::size_t f = 0; f < cfg.n_frames; ++f) {
        const double a = 2.0 * 3.14159265358979323846 * static_cast<double>(f) /
                         static_cast<double>(cfg.n_frames);
        const Vec3 eye{kRingRadius * std::cos(a), kRingRadius * std::sin(a), kRingHeight};
        const Vec3 target = look_away ? Vec3{2.0 * eye[0], 2.0 * eye[1], eye[2]} : Vec3{0, 0, 0};

        CameraFrame frame;
        frame.id = static_cast<int>(f);
        frame.width = cfg.width;
        frame.height = cfg.height;
        frame.fx = frame.fy = 40.0;
        frame.cx = cfg.width / 2.0;
        frame.cy = cfg.height / 2.0;
        frame.pose = look_at_pose(eye, target);
        frame.rgb.assign(static_cast<std::size_t>(cfg.width) * cfg.height * 3, 0.0);
        frame.depth.assign(static_cast<std::size_t>(cfg.width) * cfg.height, 0.0);

        for (const Point& pt : scene.points) {
            const Vec3 cam = frame.to_camera(pt.position);
            if (cam[2] <= kZNear) continue;
            const long u = std::lround(frame.fx * cam[0] / cam[2] + frame.cx);
            const long v = std::lround(frame.fy * cam[1] / cam[2] + frame.cy);
            if (u < 0 || v < 0 || u >= cfg.width || v >= cfg.height) continue;
            const std::size_t px = static_cast<std::size_t>(v) * cfg.width + static_cast<std::size_t>(u);
            if (frame.depth[px] == 0.0 || cam[2] < frame.depth[px]) {
                frame.depth[px] = cam[2];
                for (int c = 0; c < 3; ++c) frame.rgb[px * 3 + c] = pt.color[c];
            }
        }
        scene.frames.push_back(std::move(frame));
    }

    for (auto& inst : scene.instances) inst.centroid = instance_centroid(scene, inst.id);
    scene.validate();
    return scene;
}

}  // namespace

Scene synth_scene(const SynthConfig& cfg) { return synth_scene_impl(cfg, false); }
Scene synth_scene_unobserved(const SynthConfig& cfg) { return synth_scene_impl(cfg, true); }

// --- configuration -----------------------------------------------------------

const char* fusion_name(Fusion f) {
    switch (f) {
        case Fusion::full: return "full";
        case Fusion::concat: return "concat";
        case Fusion::parallel: return "parallel";
        case Fusion::cross_attention: return "cross_attention";
    }
    return "?";
}

Fusion fusion_from_name(const std::string& name) {
    if (name == "full") return Fusion::full;
    if (name == "concat") return Fusion::concat;
    if (name == "parallel") return Fusion::parallel;
    if (name == "cross_attention") return Fusion::cross_attention;
    throw std::invalid_argument("unknown fusion variant '" + name + "'");
}

namespace {

const char* aggregation_name(Aggregation a) {
    return a == Aggregation::cls_token ? "cls_token" : "max_pool";
}
Aggregation aggregation_from_name(const std::string& s) {
    if (s == "cls_token") return Aggregation::cls_token;
    if (s == "max_pool") return Aggregation::max_pool;
    throw std::invalid_argument("unknown aggregation '" + s + "'");
}

const char* spatial_mode_name(SpatialMode m) {
    switch (m) {
        case SpatialMode::full: return "full";
        case SpatialMode::distance_only: return "distance_only";
        case SpatialMode::orientation_only: return "orientation_only";
    }
    return "?";
}
SpatialMode spatial_mode_from_name(const std::string& s) {
    if (s == "full") return SpatialMode::full;
    if (s == "distance_only") return SpatialMode::distance_only;
    if (s == "orientation_only") return SpatialMode::orientation_only;
    throw std::invalid_argument("unknown spatial_mode '" + s + "'");
}

const char* aggregate_over_name(AggregateOver o) {
    return o == AggregateOver::self ? "self" : "others";
}
AggregateOver aggregate_over_from_name(const std::string& s) {
    if (s == "self") return AggregateOver::self;
    if (s == "others") return AggregateOver::others;
    throw std::invalid_argument("unknown aggregate_over '" + s + "'");
}

}  // namespace

void PipelineConfig::validate() const {
    mcmf().validate();
    isr().validate();
    if (k_views == 0 || levels == 0 || k_sample == 0) {
        throw std::invalid_argument("PipelineConfig: k_views, levels, k_sample must be >= 1");
    }
    if (delta_occ < 0 || rho <= 0) {
        throw std::invalid_argument("PipelineConfig: delta_occ must be >= 0 and rho > 0");
    }
}

McmfConfig PipelineConfig::mcmf() const {
    McmfConfig c;
    c.d = d;
    c.d3d = d3d;
    c.d2d = d2d;
    c.k_views = k_views;
    c.heads = heads;
    c.aggregation = aggregation;
    return c;
}

IsrConfig PipelineConfig::isr() const {
    IsrConfig c;
    c.d = d;
    c.heads = isr_heads;
    c.layers = isr_layers;
    c.n_scene_tokens = n_scene_tokens;
    c.mode = spatial_mode;
    c.aggregate_over = aggregate_over;
    return c;
}

LiftConfig PipelineConfig::lift() const {
    LiftConfig c;
    c.k_views = k_views;
    c.levels = levels;
    c.k_sample = k_sample;
    c.delta_occ = delta_occ;
    c.rho = rho;
    c.seed = data_seed;
    return c;
}

namespace {

/// Applies the keys present in `j` onto cfg; rejects unknown keys.
void apply_config_json(PipelineConfig& cfg, const json& j, const char* where) {
    for (const auto& [key, val] : j.items()) {
        if (key == "k_views") cfg.k_views = val.get<std::size_t>();
        else if (key == "levels") cfg.levels = val.get<std::size_t>();
        else if (key == "k_sample") cfg.k_sample = val.get<std::size_t>();
        else if (key == "d") cfg.d = val.get<std::size_t>();
        else if (key == "d3d") cfg.d3d = val.get<std::size_t>();
        else if (key == "d2d") cfg.d2d = val.get<std::size_t>();
        else if (key == "heads") cfg.heads = val.get<std::size_t>();
        else if (key == "aggregation") cfg.aggregation = aggregation_from_name(val.get<std::string>());
        else if (key == "fusion") cfg.fusion = fusion_from_name(val.get<std::string>());
        else if (key == "spatial_mode") cfg.spatial_mode = spatial_mode_from_name(val.get<std::string>());
        else if (key == "aggregate_over")
            cfg.aggregate_over = aggregate_over_from_name(val.get<std::string>());
        else if (key == "n_scene_tokens") cfg.n_scene_tokens = val.get<std::size_t>();
        else if (key == "isr_layers") cfg.isr_layers = val.get<std::size_t>();
        else if (key == "isr_heads") cfg.isr_heads = val.get<std::size_t>();
        else if (key == "data_seed") cfg.data_seed = val.get<std::uint64_t>();
        else if (key == "param_seed") cfg.param_seed = val.get<std::uint64_t>();
        else if (key == "delta_occ") cfg.delta_occ = val.get<double>();
        else if (key == "rho") cfg.rho = val.get<double>();
        else throw ParseError(std::string(where) + ": unknown config key '" + key + "'");
    }
}

json config_json(const PipelineConfig& cfg) {
    json j;
    j["k_views"] = cfg.k_views;
    j["levels"] = cfg.levels;
    j["k_sample"] = cfg.k_sample;
    j["d"] = cfg.d;
    j["d3d"] = cfg.d3d;
    j["d2d"] = cfg.d2d;
    j["heads"] = cfg.heads;
    j["aggregation"] = aggregation_name(cfg.aggregation);
    j["fusion"] = fusion_name(cfg.fusion);
    j["spatial_mode"] = spatial_mode_name(cfg.spatial_mode);
    j["aggregate_over"] = aggregate_over_name(cfg.aggregate_over);
    j["n_scene_tokens"] = cfg.n_scene_tokens;
    j["isr_layers"] = cfg.isr_layers;
    j["isr_heads"] = cfg.isr_heads;
    j["data_seed"] = cfg.data_seed;
    j["param_seed"] = cfg.param_seed;
    j["delta_occ"] = cfg.delta_occ;
    j["rho"] = cfg.rho;
    return j;
}

json parse_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ParseError(std::string(what) + ": cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    PipelineConfig cfg;
    apply_config_json(cfg, j, "config");
    cfg.validate();
    return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    PipelineConfig cfg;
    apply_config_json(cfg, parse_json_file(path, "config"), "config");
    cfg.validate();
    return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
    return config_json(cfg).dump(1, '\t') + "\n";
}

void save_pipeline_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
    write_text_file(path, pipeline_config_to_json(cfg));
}

void init_pipeline_params(ParamStore& ps, const PipelineConfig& cfg) {
    cfg.validate();
    init_mcmf_params(ps, cfg.mcmf());
    init_isr_params(ps, cfg.isr());
    // Fusion baselines for the ablation runner; registering them up front
    // keeps one checkpoint valid across every variant.
    add_mlp_params(ps, "fuse.concat", cfg.d3d + cfg.d2d, cfg.d, cfg.d);
    add_mlp_params(ps, "fuse.par3d", cfg.d3d, cfg.d, cfg.d);
    add_mlp_params(ps, "fuse.par2d", cfg.d2d, cfg.d, cfg.d);
}

// --- named-tensor container --------------------------------------------------

void save_named_tensors(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, Tensor>>& tensors,
                        const std::map<std::string, std::int64_t>& meta) {
    json j;
    j["version"] = 1;
    json t = json::object();
    for (const auto& [name, tensor] : tensors) {
        tensor.require_finite(name.c_str());
        t[name] = {{"shape", tensor.shape()}, {"data", tensor.raw()}};
    }
    j["tensors"] = t;
    j["meta"] = meta;
    write_text_file(path, j.dump(1, '\t') + "\n");
}

NamedTensors load_named_tensors(const std::filesystem::path& path) {
    const json j = parse_json_file(path, "named-tensor file");
    if (!j.contains("version") || j["version"].get<int>() != 1) {
        throw ParseError("named-tensor file: unsupported version in " + path.string());
    }
    NamedTensors out;
    for (const auto& [name, entry] : j.at("tensors").items()) {
        out.tensors.emplace(name, Tensor(entry.at("shape").get<Shape>(),
                                         entry.at("data").get<std::vector<double>>()));
    }
    if (j.contains("meta")) {
        for (const auto& [key, val] : j.at("meta").items()) out.meta[key] = val.get<std::int64_t>();
    }
    return out;
}

// --- pipeline ----------------------------------------------------------------

Tensor stub_point_features(const Scene& scene, std::size_t d3d) {
    const std::size_t n = scene.instances.size();
    Tensor out({n, d3d});
    for (std::size_t i = 0; i < n; ++i) {
        const InstanceProposal& inst = scene.instances[i];
        std::uint64_t h = rng::fnv1a("stub3d");
        for (std::size_t pi = 0; pi < scene.points.size(); ++pi) {
            if (!inst.mask[pi]) continue;
            const Point& p = scene.points[pi];
            h = rng::fnv1a(p.position.data(), sizeof(double) * 3, h);
            h = rng::fnv1a(p.color.data(), sizeof(double) * 3, h);
        }
        rng::SplitMix sm(h);
        double sq = 0.0;
        for (std::size_t c = 0; c < d3d; ++c) {
            out.at(i, c) = sm.next_normal();
            sq += out.at(i, c) * out.at(i, c);
        }
        const double inv = 1.0 / std::sqrt(std::max(sq, 1e-30));
        for (std::size_t c = 0; c < d3d; ++c) out.at(i, c) *= inv;
    }
    return out;
}

void save_bundle(const TokenBundle& bundle, const std::filesystem::path& path) {
    save_named_tensors(path,
                       {{"instance_tokens", bundle.instance_tokens},
                        {"scene_tokens", bundle.scene_tokens}},
                       {{"token_count", static_cast<std::int64_t>(bundle.token_count)}});
}

TokenBundle load_bundle(const std::filesystem::path& path) {
    NamedTensors nt = load_named_tensors(path);
    TokenBundle b;
    b.instance_tokens = nt.tensors.at("instance_tokens");
    b.scene_tokens = nt.tensors.at("scene_tokens");
    b.token_count = static_cast<std::size_t>(nt.meta.at("token_count"));
    return b;
}

namespace {

/// Mean of each instance's valid raw view features; zero when unobserved.
Tensor mean_view_features(const LiftedFeatures& lifted) {
    const std::size_t k = lifted.features.dim(0), n = lifted.features.dim(1),
                      d = lifted.features.dim(2);
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t count = 0;
        for (std::size_t s = 0; s < k; ++s) {
            if (!lifted.valid[s][i]) continue;
            ++count;
            for (std::size_t c = 0; c < d; ++c) out.at(i, c) += lifted.features.at(s, i, c);
        }
        if (count > 0) {
            for (std::size_t c = 0; c < d; ++c) out.at(i, c) /= static_cast<double>(count);
        }
    }
    return out;
}

Var fuse_tokens(ParamStore& ps, const PipelineConfig& cfg, const Tensor& feats3d,
                const LiftedFeatures& lifted, const ViewGrouping& grouping, McmfTrace* trace) {
    const std::size_t n = feats3d.dim(0);
    switch (cfg.fusion) {
        case Fusion::full: {
            Var o3d = Var::constant(Tensor({1, n, cfg.d3d}, feats3d.raw()));
            Var o2d = Var::constant(lifted.features);
            McmfOutput out = mcmf_forward(ps, cfg.mcmf(), o3d, o2d, grouping, trace != nullptr);
            if (trace && out.trace) *trace = *out.trace;
            return out.instance_tokens;
        }
        case Fusion::concat: {
            const Tensor mean2d = mean_view_features(lifted);
            Tensor cat({n, cfg.d3d + cfg.d2d});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t c = 0; c < cfg.d3d; ++c) cat.at(i, c) = feats3d.at(i, c);
                for (std::size_t c = 0; c < cfg.d2d; ++c) cat.at(i, cfg.d3d + c) = mean2d.at(i, c);
            }
            return mlp_forward(ps, "fuse.concat", Var::constant(cat));
        }
        case Fusion::parallel: {
            Var a = mlp_forward(ps, "fuse.par3d", Var::constant(feats3d));
            Var b = mlp_forward(ps, "fuse.par2d", Var::constant(mean_view_features(lifted)));
            return add(a, b);
        }
        case Fusion::cross_attention: {
            Var o3d = Var::constant(Tensor({1, n, cfg.d3d}, feats3d.raw()));
            Var o2d = Var::constant(lifted.features);
            auto [o3dp, o2dp] = project_features(ps, cfg.mcmf(), o3d, o2d);
            Var fused = cross_modal_inject(ps, cfg.mcmf(), o3dp, o2dp, grouping);
            return reshape(add(fused, o3dp), {n, cfg.d});
        }
    }
    throw std::logic_error("fuse_tokens: unhandled fusion variant");
}

double elapsed_ms(std::chrono::steady_clock::time_point from) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - from).count();
}

}  // namespace

PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& cfg, ParamStore& ps,
                            bool keep_trace) {
    cfg.validate();
    scene.validate();
    const std::size_t n = scene.instances.size();

    PipelineResult result;
    RunReport& report = result.report;
    report.n_instances = n;

    auto t0 = std::chrono::steady_clock::now();
    std::vector<ViewSelection> selections;
    selections.reserve(n);
    for (const auto& inst : scene.instances) {
        selections.push_back(select_top_k_views(scene, inst.id, cfg.k_views, cfg.delta_occ));
        if (selections.back().status == SelectionStatus::unobserved) {
            report.unobserved.push_back(inst.id);
        }
    }
    report.stages.push_back({"view_selection",
                             "K=" + std::to_string(cfg.k_views) + " over " +
                                 std::to_string(scene.frames.size()) + " frames",
                             elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    auto segmenter = make_oracle_segmenter();
    auto embedder = make_hash_embedder(cfg.d2d);
    const LiftedFeatures lifted =
        lift_instance_features(scene, selections, *segmenter, *embedder, cfg.lift());
    const ViewGrouping grouping = ViewGrouping::from_lift(lifted);
    report.stages.push_back(
        {"lift", "features " + shape_to_string(lifted.features.shape()), elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    const Tensor feats3d = stub_point_features(scene, cfg.d3d);
    report.stages.push_back({"encode3d", "features " + shape_to_string(feats3d.shape()), elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    McmfTrace trace;
    Var tokens = fuse_tokens(ps, cfg, feats3d, lifted, grouping,
                             cfg.fusion == Fusion::full ? &trace : nullptr);
    report.stages.push_back({std::string("fuse_") + fusion_name(cfg.fusion),
                             "tokens " + shape_to_string(tokens.shape()), elapsed_ms(t0)});

    t0 = std::chrono::steady_clock::now();
    Tensor centroids({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) centroids.at(i, a) = scene.instances[i].centroid[a];
    }
    const IsrOutput isr = isr_forward(ps, cfg.isr(), tokens, centroids);
    report.stages.push_back(
        {"relate", "scene tokens " + shape_to_string(isr.scene_tokens.shape()), elapsed_ms(t0)});

    result.bundle.instance_tokens = isr.instance_tokens.value();
    result.bundle.scene_tokens = isr.scene_tokens.value();
    result.bundle.token_count = n + cfg.n_scene_tokens;
    if (keep_trace) result.trace = trace;

    report.instance_tokens = n;
    report.scene_tokens = cfg.n_scene_tokens;
    report.total_tokens = result.bundle.token_count;
    report.baseline_separate = 6 * n;
    report.baseline_parallel = 3 * n;
    report.baseline_cross_attention = 2 * n;

    report.checks.push_back({"token_accounting", report.total_tokens == n + cfg.n_scene_tokens,
                             "total == N + n_scene_tokens"});
    report.checks.push_back({"instance_tokens_finite", result.bundle.instance_tokens.all_finite(),
                             shape_to_string(result.bundle.instance_tokens.shape())});
    report.checks.push_back({"scene_tokens_finite", result.bundle.scene_tokens.all_finite(),
                             shape_to_string(result.bundle.scene_tokens.shape())});

    bool validity_ok = true;
    for (std::size_t i = 0; i < n && validity_ok; ++i) {
        validity_ok = grouping.valid_views_of(i) ==
                      std::min<std::size_t>(cfg.k_views, selections[i].frame_ids.size());
    }
    report.checks.push_back(
        {"validity_consistency", validity_ok, "view mask matches per-instance selection counts"});

    if (cfg.fusion == Fusion::full) {
        // Instances no camera saw must pass through fusion untouched: their
        // token row equals the post-self-attention 3D row bit for bit.
        bool passthrough = true;
        const Tensor& attended = trace.o3d_attended.value();
        for (int id : report.unobserved) {
            std::size_t idx = 0;
            while (scene.instances[idx].id != id) ++idx;
            for (std::size_t c = 0; c < cfg.d; ++c) {
                if (result.bundle.instance_tokens.at(idx, c) != attended.at(std::size_t{0}, idx, c)) {
                    passthrough = false;
                }
            }
        }
        report.checks.push_back({"unobserved_passthrough", passthrough,
                                 std::to_string(report.unobserved.size()) + " unobserved instance(s)"});
    }

    return result;
}

bool RunReport::all_checks_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const ReportCheck& c) { return c.pass; });
}

std::string RunReport::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["n_instances"] = n_instances;
    j["tokens"] = {{"instance", instance_tokens}, {"scene", scene_tokens}, {"total", total_tokens}};
    j["baselines"] = {{"separate_encoding", baseline_separate},
                      {"parallel_projection", baseline_parallel},
                      {"cross_attention", baseline_cross_attention},
                      {"ours", total_tokens}};
    j["unobserved"] = unobserved;
    json stages_j = json::array();
    for (const auto& s : stages) {
        stages_j.push_back({{"name", s.name}, {"detail", s.detail}, {"ms", s.ms}});
    }
    j["stages"] = stages_j;
    json checks_j = json::array();
    for (const auto& c : checks) {
        checks_j.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    j["checks"] = checks_j;
    j["all_checks_pass"] = all_checks_pass();
    return j.dump(1, '\t') + "\n";
}

void RunReport::save(const std::filesystem::path& path) const { write_text_file(path, to_json()); }

// --- ablation ----------------------------------------------------------------

namespace {

Tensor rotate_about_mean_z(const Tensor& centroids, double angle) {
    const std::size_t n = centroids.dim(0);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += centroids.at(i, 0);
        my += centroids.at(i, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    const double c = std::cos(angle), s = std::sin(angle);
    Tensor out({n, 3});
    for (std::size_t i = 0; i < n; ++i) {
        const double x = centroids.at(i, 0) - mx, y = centroids.at(i, 1) - my;
        out.at(i, 0) = mx + c * x - s * y;
        out.at(i, 1) = my + s * x + c * y;
        out.at(i, 2) = centroids.at(i, 2);
    }
    return out;
}

/// Scene-token shift when the pairwise geometry rotates about the vertical
/// axis while the coordinate encoding stays fixed. Isolates how much
/// orientation information the spatial channels carry: with distance-only
/// features the probe is exactly zero.
double rotation_probe(ParamStore& ps, const PipelineConfig& cfg, const Tensor& tokens,
                      const Tensor& centroids) {
    const IsrConfig ic = cfg.isr();
    const Tensor pe = position_embed(centroids, ic.d, ic.pe_base);
    auto scene_from = [&](const Tensor& cts) {
        const Tensor s = spatial_features(pair_geometry(cts), ic.mode);
        Var o = Var::constant(tokens);
        Var l = spatial_conditioned_weights(pe, o, ps.var("isr.w_p"));
        Var f = relation_aggregate(attention_map(l, s), o, ic.aggregate_over);
        return scene_project(ps, ic, f).value();
    };
    const Tensor base = scene_from(centroids);
    const Tensor rotated = scene_from(rotate_about_mean_z(centroids, 0.35));
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        diff += (rotated[i] - base[i]) * (rotated[i] - base[i]);
        ref += base[i] * base[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

}  // namespace

AblationReport ablate(const Scene& scene, const std::vector<AblationVariant>& variants) {
    AblationReport report;
    for (const auto& variant : variants) {
        ParamStore ps(variant.cfg.param_seed);
        init_pipeline_params(ps, variant.cfg);
        const PipelineResult run = run_pipeline(scene, variant.cfg, ps);

        const Tensor& toks = run.bundle.instance_tokens;
        const std::size_t n = toks.dim(0), d = toks.dim(1);

        AblationRow row;
        row.name = variant.name;
        row.fusion = fusion_name(variant.cfg.fusion);
        row.total_tokens = run.bundle.token_count;

        std::vector<double> norms(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) sq += toks.at(i, c) * toks.at(i, c);
            norms[i] = std::sqrt(sq);
            row.mean_token_norm += norms[i] / static_cast<double>(n);
        }

        std::vector<double> cosines;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t jx = i + 1; jx < n; ++jx) {
                double dp = 0.0;
                for (std::size_t c = 0; c < d; ++c) dp += toks.at(i, c) * toks.at(jx, c);
                cosines.push_back(dp / std::max(norms[i] * norms[jx], 1e-12));
            }
        }
        if (!cosines.empty()) {
            double mean = 0.0;
            for (double v : cosines) mean += v;
            mean /= static_cast<double>(cosines.size());
            double var = 0.0;
            for (double v : cosines) var += (v - mean) * (v - mean);
            row.cosine_spread = std::sqrt(var / static_cast<double>(cosines.size()));
        }

        Tensor centroids({n, 3});
        for (std::size_t i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) centroids.at(i, a) = scene.instances[i].centroid[a];
        }
        row.rotation_sensitivity = rotation_probe(ps, variant.cfg, toks, centroids);

        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string AblationReport::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"name", r.name},
                          {"fusion", r.fusion},
                          {"total_tokens", r.total_tokens},
                          {"mean_token_norm", r.mean_token_norm},
                          {"cosine_spread", r.cosine_spread},
                          {"rotation_sensitivity", r.rotation_sensitivity}});
    }
    json j;
    j["schema_version"] = 1;
    j["rows"] = rows_j;
    return j.dump(1, '\t') + "\n";
}

void AblationReport::save(const std::filesystem::path& path) const {
    write_text_file(path, to_json());
}

AblationGrid load_ablation_grid(const std::filesystem::path& path) {
    const json j = parse_json_file(path, "ablation grid");
    AblationGrid grid;
    if (j.contains("scene")) {
        const json& s = j.at("scene");
        for (const auto& [key, val] : s.items()) {
            if (key == "seed") grid.scene.seed = val.get<std::uint64_t>();
            else if (key == "instances") grid.scene.n_instances = val.get<std::size_t>();
            else if (key == "frames") grid.scene.n_frames = val.get<std::size_t>();
            else if (key == "points_per_instance")
                grid.scene.points_per_instance = val.get<std::size_t>();
            else if (key == "width") grid.scene.width = val.get<int>();
            else if (key == "height") grid.scene.height = val.get<int>();
            else throw ParseError("ablation grid: unknown scene key '" + key + "'");
        }
    }
    PipelineConfig base;
    if (j.contains("base")) apply_config_json(base, j.at("base"), "ablation grid base");
    if (!j.contains("variants") || !j.at("variants").is_array() || j.at("variants").empty()) {
        throw ParseError("ablation grid: needs a non-empty 'variants' array");
    }
    for (const json& v : j.at("variants")) {
        AblationVariant variant;
        variant.cfg = base;
        json overrides = v;
        if (!overrides.contains("name")) throw ParseError("ablation grid: variant without 'name'");
        variant.name = overrides.at("name").get<std::string>();
        overrides.erase("name");
        apply_config_json(variant.cfg, overrides, "ablation grid variant");
        variant.cfg.validate();
        grid.variants.push_back(std::move(variant));
    }
    return grid;
}

}  // namespace scenetok
