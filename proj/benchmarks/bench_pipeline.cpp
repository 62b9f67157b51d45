// Microbenchmarks for the hot paths: attention forward/backward, the
// pairwise geometry kernels, and the end-to-end forward pass.
// Run: ./scenetok_bench [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include "scenetok/isr.hpp"
#include "scenetok/mcmf.hpp"
#include "scenetok/pipeline.hpp"
#include "scenetok/rng.hpp"

using namespace scenetok;

namespace {

Tensor randn(Shape shape, std::uint64_t seed) {
    rng::SplitMix sm(seed);
    Tensor t(std::move(shape));
    for (auto& v : t.raw()) v = sm.next_normal();
    return t;
}

PipelineConfig bench_config() {
    PipelineConfig cfg;
    cfg.d = 48;
    cfg.d3d = 96;
    cfg.d2d = 80;
    cfg.k_views = 5;
    cfg.levels = 3;
    return cfg;
}

}  // namespace

static void BM_AttentionForward(benchmark::State& state) {
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    ParamStore ps(1);
    add_attention_params(ps, "a", 48);
    const Tensor q = randn({2, len, 48}, 10);
    const Tensor kv = randn({2, len, 48}, 11);
    for (auto _ : state) {
        ps.begin_graph();
        AttentionParams p = attention_vars(ps, "a");
        Var out = multi_head_attention(Var::constant(q), Var::constant(kv), Var::constant(kv), p, 4);
        benchmark::DoNotOptimize(out.value()[0]);
    }
}
BENCHMARK(BM_AttentionForward)->Arg(8)->Arg(32)->Arg(128);

static void BM_AttentionBackward(benchmark::State& state) {
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    ParamStore ps(2);
    add_attention_params(ps, "a", 48);
    const Tensor q = randn({2, len, 48}, 20);
    const Tensor kv = randn({2, len, 48}, 21);
    for (auto _ : state) {
        ps.begin_graph();
        AttentionParams p = attention_vars(ps, "a");
        Var out = multi_head_attention(Var::constant(q), Var::constant(kv), Var::constant(kv), p, 4);
        backward(sum_all(out));
        benchmark::DoNotOptimize(ps.grad("a.wq")[0]);
    }
}
BENCHMARK(BM_AttentionBackward)->Arg(8)->Arg(32);

static void BM_PairGeometry(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const Tensor c = randn({n, 3}, 30);
    for (auto _ : state) {
        PairGeometry g = pair_geometry(c);
        benchmark::DoNotOptimize(g.dist.at(0, n - 1));
    }
}
BENCHMARK(BM_PairGeometry)->Arg(16)->Arg(64)->Arg(256);

static void BM_SpatialFeatures(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const PairGeometry g = pair_geometry(randn({n, 3}, 31));
    for (auto _ : state) {
        Tensor s = spatial_features(g, SpatialMode::full);
        benchmark::DoNotOptimize(s.at(0, 0, 4));
    }
}
BENCHMARK(BM_SpatialFeatures)->Arg(16)->Arg(64)->Arg(256);

static void BM_McmfForward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    McmfConfig cfg;
    cfg.d = 48;
    cfg.d3d = 96;
    cfg.d2d = 80;
    cfg.k_views = 5;
    ParamStore ps(3);
    init_mcmf_params(ps, cfg);
    const Tensor o3d = randn({1, n, cfg.d3d}, 40);
    const Tensor o2d = randn({5, n, cfg.d2d}, 41);
    ViewGrouping g;
    g.slot_frame.assign(5, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < 5; ++k) g.slot_frame[k][i] = static_cast<int>((i + k) % 6);
    }
    for (auto _ : state) {
        ps.begin_graph();
        McmfOutput out = mcmf_forward(ps, cfg, Var::constant(o3d), Var::constant(o2d), g, false);
        benchmark::DoNotOptimize(out.instance_tokens.value()[0]);
    }
}
BENCHMARK(BM_McmfForward)->Arg(4)->Arg(16);

static void BM_IsrForward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    IsrConfig cfg;
    ParamStore ps(4);
    init_isr_params(ps, cfg);
    const Tensor tokens = randn({n, cfg.d}, 50);
    const Tensor cents = randn({n, 3}, 51);
    for (auto _ : state) {
        ps.begin_graph();
        IsrOutput out = isr_forward(ps, cfg, Var::constant(tokens), cents);
        benchmark::DoNotOptimize(out.scene_tokens.value()[0]);
    }
}
BENCHMARK(BM_IsrForward)->Arg(4)->Arg(16)->Arg(64);

static void BM_SynthScene(benchmark::State& state) {
    SynthConfig cfg;
    cfg.seed = 7;
    for (auto _ : state) {
        Scene s = synth_scene(cfg);
        benchmark::DoNotOptimize(s.points.size());
        cfg.seed += 1;  // avoid hitting an identical layout every iteration
    }
}
BENCHMARK(BM_SynthScene);

static void BM_RunPipeline(benchmark::State& state) {
    SynthConfig scfg;
    scfg.seed = 7;
    const Scene scene = synth_scene(scfg);
    const PipelineConfig cfg = bench_config();
    ParamStore ps(cfg.param_seed);
    init_pipeline_params(ps, cfg);
    for (auto _ : state) {
        ps.begin_graph();
        PipelineResult res = run_pipeline(scene, cfg, ps);
        benchmark::DoNotOptimize(res.bundle.scene_tokens[0]);
    }
}
BENCHMARK(BM_RunPipeline);

BENCHMARK_MAIN();
