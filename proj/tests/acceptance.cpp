// Acceptance gate for the instance-token pipeline. Each criterion prints one
// [PASS]/[FAIL] line with the measured value next to its pinned limit; the
// process exits nonzero if any criterion fails. Tolerances and time budgets
// live in the constants below, nowhere else.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "scenetok/grad_check.hpp"
#include "scenetok/isr.hpp"
#include "scenetok/mcmf.hpp"
#include "scenetok/pipeline.hpp"
#include "scenetok/projection.hpp"
#include "scenetok/reference.hpp"
#include "scenetok/rng.hpp"
#include "scenetok/verify.hpp"

using namespace scenetok;

namespace {

constexpr double kRunBudgetSec = 1.0;        // end-to-end forward pass
constexpr double kGradBudgetSec = 120.0;     // full gradient sweep
constexpr double kOracleBudgetSec = 30.0;    // spatial oracle sweep
constexpr double kHandTol = 1e-12;           // hand-computed values
constexpr double kOracleTol = 1e-12;         // vs reference implementations
constexpr double kInvariantTol = 1e-10;      // geometry / permutation laws
constexpr std::size_t kGradSeeds = 10;
constexpr std::size_t kOracleScenes = 100;
constexpr std::size_t kInvariantSeeds = 100;
constexpr std::size_t kSelectionTables = 1000;

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor randn(Shape shape, std::uint64_t seed) {
    rng::SplitMix sm(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.raw()) v = sm.next_normal();
    return t;
}

Tensor random_centroids(std::size_t n, std::uint64_t seed) {
    rng::SplitMix sm(seed);
    Tensor c({n, 3});
    for (auto& v : c.raw()) v = (sm.next_double() - 0.5) * 8.0;
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// ---------------------------------------------------------------------------

void criterion_token_accounting() {
    const auto t0 = std::chrono::steady_clock::now();
    const Scene scene = synth_scene(SynthConfig{});  // 4 instances, 6 frames
    const PipelineConfig cfg;                        // production defaults
    ParamStore ps(cfg.param_seed);
    init_pipeline_params(ps, cfg);
    const PipelineResult res = run_pipeline(scene, cfg, ps);
    const double sec = seconds_since(t0);

    const std::size_t n = scene.instances.size();
    const bool counts = res.report.instance_tokens == n && res.report.scene_tokens == 1 &&
                        res.report.total_tokens == n + 1 && res.bundle.token_count == n + 1 &&
                        res.report.baseline_separate == 6 * n &&
                        res.report.baseline_parallel == 3 * n &&
                        res.report.baseline_cross_attention == 2 * n;
    const bool pass = counts && res.report.all_checks_pass() && sec < kRunBudgetSec;
    report("token accounting and runtime", pass,
           "N=" + std::to_string(n) + " -> " + std::to_string(res.report.total_tokens) +
               " tokens vs baselines " + std::to_string(6 * n) + "/" + std::to_string(3 * n) + "/" +
               std::to_string(2 * n) + ", " + fmt(sec) + "s (budget " + fmt(kRunBudgetSec) + "s)");
}

void criterion_gradient_sweep() {
    const auto t0 = std::chrono::steady_clock::now();
    bool all = true;
    double worst = 0.0;
    std::string worst_name;
    for (std::uint64_t seed = 17; seed < 17 + kGradSeeds; ++seed) {
        const SuiteReport rep = run_gradient_suite({}, seed);
        for (const CheckResult& c : rep.checks) {
            all = all && c.pass;
            if (c.metric > worst) {
                worst = c.metric;
                worst_name = c.name;
            }
        }
    }
    const double sec = seconds_since(t0);
    const bool pass = all && sec < kGradBudgetSec;
    report("finite-difference gradients", pass,
           std::to_string(kGradSeeds) + " seeds, worst rel err " + fmt(worst) + " (" + worst_name +
               "), " + fmt(sec) + "s (budget " + fmt(kGradBudgetSec) + "s)");
}

void criterion_spatial_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < kOracleScenes; ++seed) {
        const std::size_t n = 2 + seed % 15;  // up to 16 instances
        const Tensor c = random_centroids(n, 1000 + seed);
        const PairGeometry g = pair_geometry(c);
        const ref::PairStats stats = ref::pair_stats(c);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                worst = std::max(worst, std::abs(g.dist.at(i, j) - stats.dist[i * n + j]));
                worst = std::max(worst, std::abs(g.theta_h.at(i, j) - stats.theta_h[i * n + j]));
                worst = std::max(worst, std::abs(g.theta_v.at(i, j) - stats.theta_v[i * n + j]));
            }
        }
        const Tensor s = spatial_features(g, SpatialMode::full);
        const Tensor l = randn({n, 5}, 2000 + seed);
        worst = std::max(
            worst, max_abs_diff(attention_map(Var::constant(l), s).value(), ref::bilinear_scores(l, s)));
        const Tensor omega = randn({n, n}, 3000 + seed);
        const Tensor toks = randn({n, 6}, 4000 + seed);
        worst = std::max(worst, max_abs_diff(relation_aggregate(Var::constant(omega),
                                                                Var::constant(toks), AggregateOver::self)
                                                 .value(),
                                             ref::relation_aggregate(omega, toks, false)));
        worst = std::max(worst, max_abs_diff(relation_aggregate(Var::constant(omega),
                                                                Var::constant(toks), AggregateOver::others)
                                                 .value(),
                                             ref::relation_aggregate(omega, toks, true)));
    }
    const double sec = seconds_since(t0);
    const bool pass = worst <= kOracleTol && sec < kOracleBudgetSec;
    report("spatial oracles", pass,
           std::to_string(kOracleScenes) + " scenes, worst abs diff " + fmt(worst) + " (tol " +
               fmt(kOracleTol) + "), " + fmt(sec) + "s (budget " + fmt(kOracleBudgetSec) + "s)");
}

void criterion_geometry_invariants() {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < kInvariantSeeds; ++seed) {
        const std::size_t n = 3 + seed % 8;
        const Tensor c = random_centroids(n, 5000 + seed);
        const Tensor s = spatial_features(pair_geometry(c), SpatialMode::full);

        // channel parity under swapping the pair
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                worst = std::max(worst, std::abs(s.at(i, j, 0) + s.at(j, i, 0)));
                worst = std::max(worst, std::abs(s.at(i, j, 1) + s.at(j, i, 1)));
                worst = std::max(worst, std::abs(s.at(i, j, 2) + s.at(j, i, 2)));
                worst = std::max(worst, std::abs(s.at(i, j, 3) - s.at(j, i, 3)));
                worst = std::max(worst, std::abs(s.at(i, j, 4) - s.at(j, i, 4)));
            }
        }

        // translation invariance
        rng::SplitMix sm(6000 + seed);
        Tensor shifted = c;
        const double tx = sm.next_normal(), ty = sm.next_normal(), tz = sm.next_normal();
        for (std::size_t i = 0; i < n; ++i) {
            shifted.at(i, 0) += tx;
            shifted.at(i, 1) += ty;
            shifted.at(i, 2) += tz;
        }
        worst = std::max(worst, max_abs_diff(spatial_features(pair_geometry(shifted), SpatialMode::full), s));

        // rotation about the vertical axis advances the horizontal angle
        const double a = sm.next_double() * 6.28;
        Tensor rot({n, 3});
        for (std::size_t i = 0; i < n; ++i) {
            rot.at(i, 0) = std::cos(a) * c.at(i, 0) - std::sin(a) * c.at(i, 1);
            rot.at(i, 1) = std::sin(a) * c.at(i, 0) + std::cos(a) * c.at(i, 1);
            rot.at(i, 2) = c.at(i, 2);
        }
        const Tensor sr = spatial_features(pair_geometry(rot), SpatialMode::full);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double sh = s.at(i, j, 0) * std::cos(a) + s.at(i, j, 1) * std::sin(a);
                const double ch = s.at(i, j, 1) * std::cos(a) - s.at(i, j, 0) * std::sin(a);
                worst = std::max(worst, std::abs(sr.at(i, j, 0) - sh));
                worst = std::max(worst, std::abs(sr.at(i, j, 1) - ch));
                worst = std::max(worst, std::abs(sr.at(i, j, 2) - s.at(i, j, 2)));
                worst = std::max(worst, std::abs(sr.at(i, j, 3) - s.at(i, j, 3)));
                worst = std::max(worst, std::abs(sr.at(i, j, 4) - s.at(i, j, 4)));
            }
        }
    }
    report("geometry invariants", worst <= kInvariantTol,
           std::to_string(kInvariantSeeds) + " seeds, worst deviation " + fmt(worst) + " (tol " +
               fmt(kInvariantTol) + ")");
}

void criterion_permutation_behavior() {
    double worst = 0.0;

    // view aggregation ignores token order (both aggregation styles)
    for (Aggregation agg : {Aggregation::cls_token, Aggregation::max_pool}) {
        McmfConfig mc;
        mc.d = 16;
        mc.d3d = 12;
        mc.d2d = 10;
        mc.k_views = 2;
        mc.heads = 2;
        mc.aggregation = agg;
        ParamStore ps(31);
        init_mcmf_params(ps, mc);
        const Tensor tokens = randn({6, mc.d}, 7000);
        const std::size_t perm[6] = {5, 2, 0, 4, 1, 3};
        Tensor shuffled({6, mc.d});
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < mc.d; ++j) shuffled.at(i, j) = tokens.at(perm[i], j);
        }
        ps.begin_graph();
        const Tensor a = aggregate_view(ps, mc, Var::constant(tokens)).value();
        ps.begin_graph();
        const Tensor b = aggregate_view(ps, mc, Var::constant(shuffled)).value();
        worst = std::max(worst, max_abs_diff(a, b));
    }

    // scene tokens ignore instance order
    {
        IsrConfig ic;
        ic.d = 12;
        ic.heads = 2;
        ic.layers = 1;
        ic.n_scene_tokens = 2;
        ParamStore ps(32);
        init_isr_params(ps, ic);
        const std::size_t n = 5;
        const Tensor o = randn({n, ic.d}, 7100);
        const Tensor c = random_centroids(n, 7101);
        ps.begin_graph();
        const Tensor base = isr_forward(ps, ic, Var::constant(o), c).scene_tokens.value();
        const std::size_t perm[5] = {4, 0, 3, 1, 2};
        Tensor po({n, ic.d}), pc({n, 3});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < ic.d; ++j) po.at(i, j) = o.at(perm[i], j);
            for (std::size_t j = 0; j < 3; ++j) pc.at(i, j) = c.at(perm[i], j);
        }
        ps.begin_graph();
        const Tensor permuted = isr_forward(ps, ic, Var::constant(po), pc).scene_tokens.value();
        worst = std::max(worst, max_abs_diff(base, permuted));
    }

    // fused instance tokens permute with the instances
    {
        McmfConfig mc;
        mc.d = 12;
        mc.d3d = 10;
        mc.d2d = 8;
        mc.k_views = 2;
        mc.heads = 2;
        ParamStore ps(33);
        init_mcmf_params(ps, mc);
        const std::size_t n = 4;
        const Tensor o3d = randn({1, n, mc.d3d}, 7200);
        const Tensor o2d = randn({2, n, mc.d2d}, 7201);
        ViewGrouping g;
        g.slot_frame = {{0, 1, 0, 2}, {1, -1, 2, -1}};
        ps.begin_graph();
        const Tensor base =
            mcmf_forward(ps, mc, Var::constant(o3d), Var::constant(o2d), g, false)
                .instance_tokens.value();
        const std::size_t perm[4] = {2, 0, 3, 1};
        Tensor p3d({1, n, mc.d3d}), p2d({2, n, mc.d2d});
        ViewGrouping pg;
        pg.slot_frame.assign(2, std::vector<int>(n, -1));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < mc.d3d; ++c) p3d.at(0, i, c) = o3d.at(0, perm[i], c);
            for (std::size_t k = 0; k < 2; ++k) {
                for (std::size_t c = 0; c < mc.d2d; ++c) p2d.at(k, i, c) = o2d.at(k, perm[i], c);
                pg.slot_frame[k][i] = g.slot_frame[k][perm[i]];
            }
        }
        ps.begin_graph();
        const Tensor permuted =
            mcmf_forward(ps, mc, Var::constant(p3d), Var::constant(p2d), pg, false)
                .instance_tokens.value();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < mc.d; ++c) {
                worst = std::max(worst, std::abs(permuted.at(i, c) - base.at(perm[i], c)));
            }
        }
    }

    report("permutation behavior", worst <= kInvariantTol,
           "aggregation invariance + token equivariance, worst deviation " + fmt(worst) + " (tol " +
               fmt(kInvariantTol) + ")");
}

void criterion_residual_identity() {
    McmfConfig mc;
    mc.d = 12;
    mc.d3d = 10;
    mc.d2d = 8;
    mc.k_views = 2;
    mc.heads = 2;

    // zeroed cross-attention output projection: fusion adds exactly nothing
    ParamStore ps(41);
    init_mcmf_params(ps, mc);
    ps.tensor("mcmf.cross_attn.wo") = Tensor({mc.d, mc.d});
    ViewGrouping g;
    g.slot_frame = {{0, 1, 0}, {1, -1, 2}};
    const Var o3d = Var::constant(randn({1, 3, mc.d3d}, 8000));
    const Var o2d = Var::constant(randn({2, 3, mc.d2d}, 8001));
    const McmfOutput zeroed = mcmf_forward(ps, mc, o3d, o2d, g, true);
    double worst = 0.0;
    const Tensor& att = zeroed.trace->o3d_attended.value();
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < mc.d; ++c) {
            if (zeroed.instance_tokens.value().at(i, c) != att.at(std::size_t{0}, i, c)) worst = 1.0;
        }
    }

    // instances nobody saw: 3D branch passes through bit for bit even with
    // live cross-attention weights
    ParamStore ps2(42);
    init_mcmf_params(ps2, mc);
    ViewGrouping g2;
    g2.slot_frame = {{0, -1, 0}, {1, -1, 2}};
    const McmfOutput mixed = mcmf_forward(ps2, mc, o3d, o2d, g2, true);
    const Tensor& att2 = mixed.trace->o3d_attended.value();
    for (std::size_t c = 0; c < mc.d; ++c) {
        if (mixed.instance_tokens.value().at(1, c) != att2.at(std::size_t{0}, 1, c)) worst = 1.0;
        if (mixed.trace->fused.value().at(std::size_t{0}, 1, c) != 0.0) worst = 1.0;
    }

    report("residual identity", worst == 0.0,
           worst == 0.0 ? "zeroed injection and unobserved rows match bit for bit"
                        : "tokens deviate from the 3D branch");
}

void criterion_view_selection() {
    rng::SplitMix sm(9100);
    std::size_t mismatches = 0;
    for (std::size_t t = 0; t < kSelectionTables; ++t) {
        const std::size_t n_frames = 1 + sm.next_below(10);
        VisibilityReport rep;
        std::vector<std::pair<int, std::size_t>> table;
        for (std::size_t f = 0; f < n_frames; ++f) {
            VisibleEntry e;
            e.frame_id = static_cast<int>(f);
            e.visible_count = sm.next_below(6);  // dense ties
            table.emplace_back(e.frame_id, e.visible_count);
            rep.entries.push_back(std::move(e));
        }
        const std::size_t k = 1 + sm.next_below(7);
        if (select_top_k_views(rep, k).frame_ids != ref::top_k_frames(table, k)) ++mismatches;
    }
    report("view selection vs oracle", mismatches == 0,
           std::to_string(kSelectionTables) + " randomized tables, " + std::to_string(mismatches) +
               " mismatches");
}

void criterion_hand_values() {
    double worst = 0.0;

    // pinhole projection with identity pose
    CameraFrame f;
    f.fx = f.fy = 100;
    f.cx = f.cy = 50;
    f.pose = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    f.width = f.height = 101;
    const auto pa = project_point(f, {0, 0, 2});
    const auto pb = project_point(f, {1, 0, 2});
    if (!pa || !pb || project_point(f, {0, 0, 0})) {
        worst = 1.0;
    } else {
        worst = std::max(worst, std::abs(pa->u - 50.0));
        worst = std::max(worst, std::abs(pa->v - 50.0));
        worst = std::max(worst, std::abs(pb->u - 100.0));
    }

    // 3-4-5 triangle spatial features
    const Tensor c({2, 3}, {0, 0, 1, 3, 4, 1});
    const Tensor s = spatial_features(pair_geometry(c), SpatialMode::full);
    const double expect_s[5] = {0.8, 0.6, 0.0, 1.0, 5.0};
    for (std::size_t ch = 0; ch < 5; ++ch) {
        worst = std::max(worst, std::abs(s.at(0, 1, ch) - expect_s[ch]));
    }

    // coordinate encoding, D=12, centroid (1,2,3)
    const double f1 = std::pow(10000.0, -0.5);
    const Tensor pe = position_embed(Tensor({1, 3}, {1, 2, 3}), 12, 10000.0);
    const double expect_pe[12] = {std::sin(1.0), std::cos(1.0), std::sin(f1),     std::cos(f1),
                                  std::sin(2.0), std::cos(2.0), std::sin(2 * f1), std::cos(2 * f1),
                                  std::sin(3.0), std::cos(3.0), std::sin(3 * f1), std::cos(3 * f1)};
    for (std::size_t i = 0; i < 12; ++i) worst = std::max(worst, std::abs(pe.at(0, i) - expect_pe[i]));

    // multi-scale crop widths for a 10px box, growth 0.5
    CameraFrame big;
    big.id = 0;
    big.width = big.height = 100;
    const auto crops = multi_level_crops(big, {45, 45, 55, 55}, 3, 0.5);
    const double expect_w[3] = {10, 15, 20};
    for (std::size_t l = 0; l < 3; ++l) worst = std::max(worst, std::abs(crops[l].width() - expect_w[l]));

    // softmax of equal logits is exactly uniform
    const Tensor sm = softmax(Var::constant(Tensor({1, 4}, {0.3, 0.3, 0.3, 0.3})), 1).value();
    for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(sm.at(0, i) - 0.25));

    report("hand-computed values", worst <= kHandTol,
           "projection, pair features, coordinate encoding, crops, softmax; worst " + fmt(worst) +
               " (tol " + fmt(kHandTol) + ")");
}

void criterion_bundle_determinism() {
    namespace fs = std::filesystem;
    SynthConfig scfg;
    scfg.seed = 5;
    const Scene scene = synth_scene(scfg);
    PipelineConfig cfg;
    cfg.d = 12;
    cfg.d3d = 16;
    cfg.d2d = 10;
    cfg.heads = 2;
    cfg.isr_heads = 2;
    cfg.isr_layers = 1;
    cfg.k_views = 2;
    cfg.levels = 2;
    cfg.k_sample = 3;

    std::string blobs[2];
    for (int r = 0; r < 2; ++r) {
        const fs::path p = fs::temp_directory_path() / ("scenetok_accept_" + std::to_string(r) + ".bin");
        ParamStore ps(cfg.param_seed);
        init_pipeline_params(ps, cfg);
        save_bundle(run_pipeline(scene, cfg, ps).bundle, p);
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        blobs[r] = ss.str();
        std::remove(p.string().c_str());
    }
    const bool pass = !blobs[0].empty() && blobs[0] == blobs[1];
    report("bundle byte determinism", pass,
           pass ? std::to_string(blobs[0].size()) + " bytes identical across two runs"
                : "files differ between runs");
}

void criterion_fault_pairing() {
    const bool clean = suites_all_pass(run_suites("all"));
    Faults grad_fault;
    grad_fault.gradient_offset = 1e-2;
    const bool grad_trips = !suites_all_pass(run_suites("gradients", grad_fault));
    Faults sym_fault;
    sym_fault.spatial_symmetry = true;
    const bool sym_trips = !suites_all_pass(run_suites("invariants", sym_fault));
    Faults oracle_fault;
    oracle_fault.oracle = true;
    const bool oracle_trips = !suites_all_pass(run_suites("oracles", oracle_fault));

    const bool pass = clean && grad_trips && sym_trips && oracle_trips;
    std::string detail = std::string("clean=") + (clean ? "pass" : "FAIL") +
                         ", gradient fault trips=" + (grad_trips ? "yes" : "NO") +
                         ", symmetry fault trips=" + (sym_trips ? "yes" : "NO") +
                         ", oracle fault trips=" + (oracle_trips ? "yes" : "NO");
    report("fault injection pairing", pass, detail);
}

}  // namespace

int main() {
    criterion_token_accounting();
    criterion_gradient_sweep();
    criterion_spatial_oracles();
    criterion_geometry_invariants();
    criterion_permutation_behavior();
    criterion_residual_identity();
    criterion_view_selection();
    criterion_hand_values();
    criterion_bundle_determinism();
    criterion_fault_pairing();

    if (failures == 0) {
        std::printf("all 10 acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", failures);
    return 1;
}
