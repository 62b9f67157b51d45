#include "scenetok/verify.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "scenetok/grad_check.hpp"
#include "scenetok/isr.hpp"
#include "scenetok/mcmf.hpp"
#include "scenetok/pipeline.hpp"
#include "scenetok/projection.hpp"
#include "scenetok/reference.hpp"
#include "scenetok/rng.hpp"

namespace scenetok {

namespace {

Tensor randn(Shape shape, std::uint64_t seed, double scale = 1.0) {
    rng::SplitMix sm(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.raw()) v = sm.next_normal() * scale;
    return t;
}

/// Scalar probe that is sensitive to every output coordinate.
Var probe_sum(const Var& x, std::uint64_t seed) {
    return sum_all(mul(x, Var::constant(randn(x.shape(), seed))));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

CheckResult from_grad(const std::string& name, const GradCheckReport& rep, double tol) {
    return {name, rep.pass(tol), rep.max_rel_err, tol, rep.summary()};
}

CheckResult bounded(const std::string& name, double metric, double tol, std::string detail = "") {
    return {name, metric <= tol, metric, tol, std::move(detail)};
}

PipelineConfig small_pipeline_config(std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.k_views = 2;
    cfg.levels = 2;
    cfg.k_sample = 3;
    cfg.d = 12;
    cfg.d3d = 16;
    cfg.d2d = 10;
    cfg.heads = 2;
    cfg.isr_heads = 2;
    cfg.isr_layers = 1;
    cfg.n_scene_tokens = 1;
    cfg.data_seed = seed;
    cfg.param_seed = seed + 1;
    return cfg;
}

}  // namespace

bool SuiteReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

// --- gradients ---------------------------------------------------------------

SuiteReport run_gradient_suite(const Faults& faults, std::uint64_t seed) {
    SuiteReport report{"gradients", {}};
    const double off = faults.gradient_offset;
    constexpr double kOpTol = 1e-4;
    constexpr double kModuleTol = 1e-3;

    {
        ParamStore ps(seed);
        ps.add("w", {6, 4}, InitScheme::uniform_fan_in, 6);
        ps.add("b", {4}, InitScheme::normal_002);
        const Tensor x = randn({3, 6}, seed + 1);
        auto f = [&] { return probe_sum(add(matmul(Var::constant(x), ps.var("w")), ps.var("b")), seed + 2); };
        report.checks.push_back(from_grad("grad_matmul_bias", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        ParamStore ps(seed + 10);
        ps.add("w", {5, 5}, InitScheme::uniform_fan_in, 5);
        const Tensor x = randn({4, 5}, seed + 11);
        auto f = [&] { return probe_sum(softmax(matmul(Var::constant(x), ps.var("w")), 1), seed + 12); };
        report.checks.push_back(from_grad("grad_softmax", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        ParamStore ps(seed + 20);
        ps.add("w", {5, 6}, InitScheme::uniform_fan_in, 5);
        ps.add("gamma", {6}, InitScheme::ones);
        ps.add("beta", {6}, InitScheme::normal_002);
        const Tensor x = randn({4, 5}, seed + 21);
        auto f = [&] {
            return probe_sum(
                layer_norm(matmul(Var::constant(x), ps.var("w")), ps.var("gamma"), ps.var("beta")),
                seed + 22);
        };
        report.checks.push_back(from_grad("grad_layer_norm", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        ParamStore ps(seed + 30);
        ps.add("w", {5, 4}, InitScheme::uniform_fan_in, 5);
        const Tensor x = randn({3, 5}, seed + 31);
        auto f = [&] { return probe_sum(gelu(matmul(Var::constant(x), ps.var("w"))), seed + 32); };
        report.checks.push_back(from_grad("grad_gelu", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        // reshape/transpose/concat/narrow/stack composite
        ParamStore ps(seed + 40);
        ps.add("w", {4, 6}, InitScheme::uniform_fan_in, 4);
        const Tensor x = randn({2, 4}, seed + 41);
        auto f = [&] {
            Var y = matmul(Var::constant(x), ps.var("w"));   // [2,6]
            Var t = transpose(reshape(y, {2, 3, 2}), {1, 0, 2});  // [3,2,2]
            Var c = concat({t, t}, 2);                            // [3,2,4]
            Var nr = narrow(c, 0, 1, 2);                          // [2,2,4]
            Var st = stack0({nr, nr});                            // [2,2,2,4]
            return probe_sum(st, seed + 42);
        };
        report.checks.push_back(from_grad("grad_structural", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        // max_pool / mean / sum / mul_axis0
        ParamStore ps(seed + 50);
        ps.add("w", {4, 6}, InitScheme::uniform_fan_in, 4);
        ps.add("r", {3}, InitScheme::normal_002);
        const Tensor x = randn({3, 4}, seed + 51);
        // constant offset pinning each pooled column's argmax: without a
        // margin, a finite-difference nudge can flip the max and invalidate
        // the central difference
        Tensor margin({3, 6});
        for (std::size_t j = 0; j < 6; ++j) margin.at(j % 3, j) = 2.0;
        auto f = [&] {
            Var y = matmul(Var::constant(x), ps.var("w"));  // [3,6]
            Var scaled = add(mul_axis0(y, ps.var("r")), Var::constant(margin));
            Var parts = concat({max_pool(scaled, 0), mean(scaled, 1), sum(scaled, 0)}, 0);
            return probe_sum(parts, seed + 52);
        };
        report.checks.push_back(from_grad("grad_reductions", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        ParamStore ps(seed + 60);
        add_attention_params(ps, "attn", 8);
        const Tensor q = randn({2, 3, 8}, seed + 61);
        const Tensor k = randn({2, 4, 8}, seed + 62);
        const Tensor v = randn({2, 4, 8}, seed + 63);
        Tensor key_valid({2, 4}, {1, 1, 0, 1, 1, 0, 1, 1});
        auto f = [&] {
            AttentionParams p = attention_vars(ps, "attn");
            return probe_sum(multi_head_attention(Var::constant(q), Var::constant(k),
                                                  Var::constant(v), p, 2, &key_valid),
                             seed + 64);
        };
        report.checks.push_back(from_grad("grad_attention_op", grad_check(ps, f, 1e-4, off), kOpTol));
    }
    {
        McmfConfig mc;
        mc.d = 12;
        mc.d3d = 10;
        mc.d2d = 8;
        mc.k_views = 2;
        mc.heads = 2;
        ParamStore ps(seed + 70);
        init_mcmf_params(ps, mc);
        const Tensor o3d = randn({1, 3, 10}, seed + 71);
        const Tensor o2d = randn({2, 3, 8}, seed + 72);
        ViewGrouping grouping;
        grouping.slot_frame = {{0, 1, 0}, {1, -1, 2}};
        auto f = [&] {
            McmfOutput out =
                mcmf_forward(ps, mc, Var::constant(o3d), Var::constant(o2d), grouping);
            return probe_sum(out.instance_tokens, seed + 73);
        };
        report.checks.push_back(from_grad("grad_mcmf_module", grad_check(ps, f, 1e-4, off), kModuleTol));
    }
    {
        IsrConfig ic;
        ic.d = 12;
        ic.heads = 2;
        ic.layers = 1;
        ic.n_scene_tokens = 2;
        ParamStore ps(seed + 80);
        init_isr_params(ps, ic);
        const Tensor o_i = randn({4, 12}, seed + 81);
        const Tensor centroids = randn({4, 3}, seed + 82, 2.0);
        auto f = [&] {
            IsrOutput out = isr_forward(ps, ic, Var::constant(o_i), centroids);
            return probe_sum(out.scene_tokens, seed + 83);
        };
        report.checks.push_back(from_grad("grad_isr_module", grad_check(ps, f, 1e-4, off), kModuleTol));
    }
    return report;
}

// --- invariants --------------------------------------------------------------

SuiteReport run_invariant_suite(const Faults& faults, std::uint64_t seed) {
    SuiteReport report{"invariants", {}};
    const Tensor centroids = randn({5, 3}, seed + 1, 2.0);
    PairGeometry g = pair_geometry(centroids);
    if (faults.spatial_symmetry) {
        g.dist.at(0, 1) += 1e-3;
        g.theta_h.at(0, 1) += 1e-3;
    }

    {
        double m = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                m = std::max(m, std::abs(g.dist.at(i, j) - g.dist.at(j, i)));
            }
        }
        report.checks.push_back(bounded("pair_distance_symmetry", m, 1e-12, "d(i,j) == d(j,i)"));
    }
    {
        double m = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                if (i == j) continue;
                m = std::max(m, std::abs(std::sin(g.theta_h.at(i, j)) + std::sin(g.theta_h.at(j, i))));
                m = std::max(m, std::abs(std::cos(g.theta_h.at(i, j)) + std::cos(g.theta_h.at(j, i))));
                m = std::max(m, std::abs(g.theta_v.at(i, j) + g.theta_v.at(j, i)));
            }
        }
        report.checks.push_back(
            bounded("pair_angle_antisymmetry", m, 1e-12, "swapped pairs face opposite ways"));
    }
    {
        Tensor shifted({5, 3});
        for (std::size_t i = 0; i < 5; ++i) {
            shifted.at(i, 0) = centroids.at(i, 0) + 1.5;
            shifted.at(i, 1) = centroids.at(i, 1) - 2.25;
            shifted.at(i, 2) = centroids.at(i, 2) + 0.75;
        }
        const PairGeometry gs = pair_geometry(shifted);
        double m = std::max({max_abs_diff(g.dist, gs.dist), max_abs_diff(g.theta_h, gs.theta_h),
                             max_abs_diff(g.theta_v, gs.theta_v)});
        report.checks.push_back(
            bounded("pair_translation_invariance", m, 1e-9, "geometry ignores a rigid shift"));
    }
    {
        const double c = std::cos(0.7), s = std::sin(0.7);
        Tensor rot({5, 3});
        for (std::size_t i = 0; i < 5; ++i) {
            rot.at(i, 0) = c * centroids.at(i, 0) - s * centroids.at(i, 1);
            rot.at(i, 1) = s * centroids.at(i, 0) + c * centroids.at(i, 1);
            rot.at(i, 2) = centroids.at(i, 2);
        }
        const PairGeometry gr = pair_geometry(rot);
        report.checks.push_back(bounded("pair_rotation_distance_invariance",
                                        max_abs_diff(g.dist, gr.dist), 1e-9,
                                        "distances survive a z-rotation"));
    }
    {
        // A mask leaving one valid key must reproduce the single-key result
        // exactly; this is what makes the unobserved-instance path bit-stable.
        ParamStore ps(seed + 5);
        add_attention_params(ps, "attn", 8);
        AttentionParams p = attention_vars(ps, "attn");
        const Tensor q = randn({1, 1, 8}, seed + 6);
        const Tensor k3 = randn({1, 3, 8}, seed + 7);
        const Tensor v3 = randn({1, 3, 8}, seed + 8);
        Tensor key_valid({1, 3}, {0, 1, 0});
        const Tensor masked =
            multi_head_attention(Var::constant(q), Var::constant(k3), Var::constant(v3), p, 2,
                                 &key_valid)
                .value();
        Tensor k1({1, 1, 8}), v1({1, 1, 8});
        for (std::size_t c = 0; c < 8; ++c) {
            k1.at(0, 0, c) = k3.at(0, 1, c);
            v1.at(0, 0, c) = v3.at(0, 1, c);
        }
        const Tensor single =
            multi_head_attention(Var::constant(q), Var::constant(k1), Var::constant(v1), p, 2)
                .value();
        report.checks.push_back(bounded("masked_attention_exactness", max_abs_diff(masked, single),
                                        0.0, "one valid key == that key alone, bitwise"));
    }
    {
        McmfConfig mc;
        mc.d = 12;
        mc.d3d = 10;
        mc.d2d = 8;
        mc.k_views = 2;
        mc.heads = 2;
        ParamStore ps(seed + 9);
        init_mcmf_params(ps, mc);
        const std::size_t n = 4;
        const Tensor o3d = randn({1, n, 10}, seed + 10);
        const Tensor o2d = randn({2, n, 8}, seed + 11);
        ViewGrouping grouping;
        grouping.slot_frame = {{0, 1, 0, 2}, {1, -1, 2, 0}};
        const Tensor base =
            mcmf_forward(ps, mc, Var::constant(o3d), Var::constant(o2d), grouping).instance_tokens.value();

        const std::vector<std::size_t> perm{2, 0, 3, 1};
        Tensor o3dp({1, n, 10}), o2dp({2, n, 8});
        ViewGrouping gp;
        gp.slot_frame.assign(2, std::vector<int>(n, -1));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 10; ++c) o3dp.at(0, i, c) = o3d.at(0, perm[i], c);
            for (std::size_t s = 0; s < 2; ++s) {
                for (std::size_t c = 0; c < 8; ++c) o2dp.at(s, i, c) = o2d.at(s, perm[i], c);
                gp.slot_frame[s][i] = grouping.slot_frame[s][perm[i]];
            }
        }
        const Tensor permuted =
            mcmf_forward(ps, mc, Var::constant(o3dp), Var::constant(o2dp), gp).instance_tokens.value();
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 12; ++c) {
                m = std::max(m, std::abs(permuted.at(i, c) - base.at(perm[i], c)));
            }
        }
        report.checks.push_back(
            bounded("mcmf_permutation_equivariance", m, 1e-9, "relabeling instances relabels tokens"));
    }
    {
        IsrConfig ic;
        ic.d = 12;
        ic.heads = 2;
        ic.layers = 1;
        ic.n_scene_tokens = 2;
        ParamStore ps(seed + 12);
        init_isr_params(ps, ic);
        const std::size_t n = 4;
        const Tensor o_i = randn({n, 12}, seed + 13);
        const Tensor cts = randn({n, 3}, seed + 14, 2.0);
        const Tensor base = isr_forward(ps, ic, Var::constant(o_i), cts).scene_tokens.value();
        const std::vector<std::size_t> perm{3, 1, 0, 2};
        Tensor o_ip({n, 12}), ctsp({n, 3});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 12; ++c) o_ip.at(i, c) = o_i.at(perm[i], c);
            for (std::size_t c = 0; c < 3; ++c) ctsp.at(i, c) = cts.at(perm[i], c);
        }
        const Tensor permuted = isr_forward(ps, ic, Var::constant(o_ip), ctsp).scene_tokens.value();
        report.checks.push_back(bounded("scene_token_permutation_invariance",
                                        max_abs_diff(base, permuted), 1e-9,
                                        "scene summary ignores instance order"));
    }

    const Scene scene = synth_scene({seed, 3, 4, 40});
    {
        PipelineConfig cfg = small_pipeline_config(seed);
        ParamStore ps(cfg.param_seed);
        init_pipeline_params(ps, cfg);
        const PipelineResult run = run_pipeline(scene, cfg, ps);
        const bool ok = run.bundle.token_count == 3 + 1 && run.report.baseline_separate == 18 &&
                        run.report.baseline_parallel == 9 && run.report.baseline_cross_attention == 6 &&
                        run.report.all_checks_pass();
        report.checks.push_back({"token_accounting", ok,
                                 static_cast<double>(run.bundle.token_count), 4.0,
                                 "N + n_scene_tokens with 6N/3N/2N baselines"});
    }
    {
        const Scene away = synth_scene_unobserved({seed, 2, 3, 40});
        PipelineConfig cfg = small_pipeline_config(seed);
        ParamStore ps(cfg.param_seed);
        init_pipeline_params(ps, cfg);
        const PipelineResult run = run_pipeline(away, cfg, ps);
        bool passthrough = run.report.unobserved.size() == 2;
        for (const auto& c : run.report.checks) {
            if (c.name == "unobserved_passthrough") passthrough = passthrough && c.pass;
        }
        report.checks.push_back({"unobserved_passthrough", passthrough,
                                 static_cast<double>(run.report.unobserved.size()), 2.0,
                                 "cameras aimed away leave the 3D branch untouched"});
    }
    {
        const CameraFrame& frame = scene.frames[0];
        const auto crops = multi_level_crops(frame, {10, 12, 20, 30}, 3, 0.5);
        std::size_t violations = 0;
        for (std::size_t l = 1; l < crops.size(); ++l) {
            if (crops[l].u_min > crops[l - 1].u_min || crops[l].v_min > crops[l - 1].v_min ||
                crops[l].u_max < crops[l - 1].u_max || crops[l].v_max < crops[l - 1].v_max) {
                ++violations;
            }
        }
        for (const Crop& c : crops) {
            if (c.u_min < 0 || c.v_min < 0 || c.u_max > frame.width || c.v_max > frame.height) {
                ++violations;
            }
        }
        report.checks.push_back(bounded("crop_nesting", static_cast<double>(violations), 0.0,
                                        "each crop level contains the previous and stays in-image"));
    }
    {
        std::size_t violations = 0;
        for (const auto& inst : scene.instances) {
            const ViewSelection small = select_top_k_views(scene, inst.id, 2, 0.05);
            const ViewSelection large = select_top_k_views(scene, inst.id, 10, 0.05);
            if (small.frame_ids.size() > large.frame_ids.size()) ++violations;
            for (std::size_t i = 0; i < small.frame_ids.size(); ++i) {
                if (small.frame_ids[i] != large.frame_ids[i]) ++violations;
            }
        }
        report.checks.push_back(bounded("selection_prefix", static_cast<double>(violations), 0.0,
                                        "top-K is a prefix of the full ranking"));
    }
    return report;
}

// --- oracles -----------------------------------------------------------------

SuiteReport run_oracle_suite(const Faults& faults, std::uint64_t seed) {
    SuiteReport report{"oracles", {}};
    const Scene scene = synth_scene({seed, 4, 6, 50});

    {
        double m = 0.0;
        std::size_t disagreements = 0;
        for (const CameraFrame& frame : scene.frames) {
            for (std::size_t pi = 0; pi < scene.points.size(); pi += 7) {
                const Vec3& p = scene.points[pi].position;
                const auto fast = project_point(frame, p);
                const auto slow = ref::project_point(frame.fx, frame.fy, frame.cx, frame.cy,
                                                     frame.pose, p, kZNear);
                if (fast.has_value() != slow.has_value()) {
                    ++disagreements;
                    continue;
                }
                if (!fast) continue;
                m = std::max({m, std::abs(fast->u - (*slow)[0]), std::abs(fast->v - (*slow)[1]),
                              std::abs(fast->z - (*slow)[2])});
            }
        }
        report.checks.push_back(bounded("oracle_projection", m + static_cast<double>(disagreements),
                                        1e-12, "pinhole math vs longhand recomputation"));
    }
    {
        std::size_t mismatches = 0;
        for (const auto& inst : scene.instances) {
            for (const CameraFrame& frame : scene.frames) {
                const std::size_t fast = visible_points(frame, scene, inst.id, 0.05).visible_count;
                const std::size_t slow = ref::count_visible(frame, scene, inst.id, 0.05);
                if (fast != slow) ++mismatches;
            }
        }
        report.checks.push_back(bounded("oracle_visibility", static_cast<double>(mismatches), 0.0,
                                        "batched visibility vs brute-force per-point count"));
    }
    {
        std::size_t mismatches = 0;
        for (const auto& inst : scene.instances) {
            const VisibilityReport vr = visibility_report(scene, inst.id, 0.05);
            std::vector<std::pair<int, std::size_t>> counts;
            for (const auto& e : vr.entries) counts.emplace_back(e.frame_id, e.visible_count);
            const std::vector<int> slow = ref::top_k_frames(counts, 3);
            const ViewSelection fast = select_top_k_views(vr, 3);
            if (fast.frame_ids != slow) ++mismatches;
        }
        report.checks.push_back(bounded("oracle_view_selection", static_cast<double>(mismatches),
                                        0.0, "ranked selection vs repeated max scan"));
    }
    {
        ParamStore ps(seed + 2);
        add_attention_params(ps, "attn", 8);
        AttentionParams p = attention_vars(ps, "attn");
        const Tensor q = randn({2, 3, 8}, seed + 3);
        const Tensor k = randn({2, 4, 8}, seed + 4);
        const Tensor v = randn({2, 4, 8}, seed + 5);
        Tensor fast = multi_head_attention(Var::constant(q), Var::constant(k), Var::constant(v), p, 2)
                          .value();
        if (faults.oracle) fast[0] += 1e-6;
        const Tensor slow =
            ref::attention(q, k, v, ps.tensor("attn.wq"), ps.tensor("attn.bq"), ps.tensor("attn.wk"),
                           ps.tensor("attn.bk"), ps.tensor("attn.wv"), ps.tensor("attn.bv"),
                           ps.tensor("attn.wo"), ps.tensor("attn.bo"), 2);
        report.checks.push_back(bounded("oracle_attention", max_abs_diff(fast, slow), 1e-10,
                                        "graph attention vs loop attention"));

        Tensor key_valid({2, 4}, {1, 0, 1, 1, 0, 1, 1, 0});
        const Tensor fast_m = multi_head_attention(Var::constant(q), Var::constant(k),
                                                   Var::constant(v), p, 2, &key_valid)
                                  .value();
        const Tensor slow_m =
            ref::attention(q, k, v, ps.tensor("attn.wq"), ps.tensor("attn.bq"), ps.tensor("attn.wk"),
                           ps.tensor("attn.bk"), ps.tensor("attn.wv"), ps.tensor("attn.bv"),
                           ps.tensor("attn.wo"), ps.tensor("attn.bo"), 2, &key_valid);
        report.checks.push_back(bounded("oracle_attention_masked", max_abs_diff(fast_m, slow_m),
                                        1e-10, "same, with invalid keys masked"));
    }
    {
        Tensor centroids({4, 3});
        for (std::size_t i = 0; i < 4; ++i) {
            for (int a = 0; a < 3; ++a) centroids.at(i, a) = scene.instances[i].centroid[a];
        }
        const PairGeometry fast = pair_geometry(centroids);
        const ref::PairStats slow = ref::pair_stats(centroids);
        const double m = std::max({max_abs_diff(fast.dist, slow.dist),
                                   max_abs_diff(fast.theta_h, slow.theta_h),
                                   max_abs_diff(fast.theta_v, slow.theta_v)});
        report.checks.push_back(
            bounded("oracle_pair_geometry", m, 1e-12, "distances and angles vs longhand loops"));

        const Tensor s = spatial_features(fast, SpatialMode::full);
        const Tensor l = randn({4, 5}, seed + 6);
        const Tensor omega_fast = attention_map(Var::constant(l), s).value();
        const Tensor omega_slow = ref::bilinear_scores(l, s);
        report.checks.push_back(bounded("oracle_bilinear", max_abs_diff(omega_fast, omega_slow),
                                        1e-12, "spatially conditioned scores vs triple loop"));

        const Tensor tokens = randn({4, 6}, seed + 7);
        const Tensor self_fast =
            relation_aggregate(Var::constant(omega_fast), Var::constant(tokens), AggregateOver::self)
                .value();
        const Tensor others_fast =
            relation_aggregate(Var::constant(omega_fast), Var::constant(tokens), AggregateOver::others)
                .value();
        const double ma =
            std::max(max_abs_diff(self_fast, ref::relation_aggregate(omega_fast, tokens, false)),
                     max_abs_diff(others_fast, ref::relation_aggregate(omega_fast, tokens, true)));
        report.checks.push_back(
            bounded("oracle_relation_aggregate", ma, 1e-12, "both aggregation modes vs loops"));
    }
    {
        const Tensor x = randn({5, 7}, seed + 8);
        report.checks.push_back(bounded("oracle_softmax",
                                        max_abs_diff(softmax(Var::constant(x), 1).value(),
                                                     ref::softmax_rows(x)),
                                        1e-12, "softmax vs row loops"));

        const Tensor gm = randn({7}, seed + 9), bt = randn({7}, seed + 10);
        report.checks.push_back(
            bounded("oracle_layer_norm",
                    max_abs_diff(layer_norm(Var::constant(x), Var::constant(gm), Var::constant(bt))
                                     .value(),
                                 ref::layer_norm_rows(x, gm, bt, 1e-5)),
                    1e-12, "layer norm vs row loops"));

        const Tensor gf = gelu(Var::constant(x)).value();
        double m = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            m = std::max(m, std::abs(gf[i] - ref::gelu_scalar(x[i])));
        }
        report.checks.push_back(bounded("oracle_gelu", m, 1e-12, "gelu vs scalar formula"));
    }
    return report;
}

std::vector<SuiteReport> run_suites(const std::string& suite, const Faults& faults,
                                    std::uint64_t seed) {
    std::vector<SuiteReport> reports;
    if (suite == "gradients" || suite == "all") reports.push_back(run_gradient_suite(faults, seed));
    if (suite == "invariants" || suite == "all") reports.push_back(run_invariant_suite(faults, seed));
    if (suite == "oracles" || suite == "all") reports.push_back(run_oracle_suite(faults, seed));
    if (reports.empty()) {
        throw std::invalid_argument("unknown suite '" + suite +
                                    "' (expected gradients|invariants|oracles|all)");
    }
    return reports;
}

std::string suites_to_json(const std::vector<SuiteReport>& reports) {
    nlohmann::json suites = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& c : r.checks) {
            checks.push_back({{"name", c.name},
                              {"pass", c.pass},
                              {"metric", c.metric},
                              {"tolerance", c.tolerance},
                              {"detail", c.detail}});
        }
        suites.push_back({{"suite", r.suite}, {"checks", checks}, {"all_pass", r.all_pass()}});
    }
    nlohmann::json j;
    j["schema_version"] = 1;
    j["suites"] = suites;
    j["all_pass"] = suites_all_pass(reports);
    return j.dump(1, '\t') + "\n";
}

bool suites_all_pass(const std::vector<SuiteReport>& reports) {
    return std::all_of(reports.begin(), reports.end(),
                       [](const SuiteReport& r) { return r.all_pass(); });
}

}  // namespace scenetok
