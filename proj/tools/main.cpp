// Command-line front end: synthesize scenes, run the tokenization pipeline,
// execute the verification suites, and sweep ablation grids.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "scenetok/pipeline.hpp"
#include "scenetok/verify.hpp"

namespace {

using namespace scenetok;

int cmd_synth(const SynthConfig& cfg, const std::string& out) {
    const Scene scene = synth_scene(cfg);
    save_scene(scene, out);
    std::printf("wrote %s: %zu points, %zu frames, %zu instances\n", out.c_str(),
                scene.points.size(), scene.frames.size(), scene.instances.size());
    return 0;
}

int cmd_run(const std::string& scene_path, const std::string& config_path, const std::string& out,
            const std::string& report_path, const std::string& params_in,
            const std::string& params_out, const std::string& trace_path) {
    const Scene scene = load_scene(scene_path);
    const PipelineConfig cfg =
        config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);

    ParamStore ps = params_in.empty() ? ParamStore(cfg.param_seed) : ParamStore::load(params_in);
    if (params_in.empty()) init_pipeline_params(ps, cfg);

    const PipelineResult result = run_pipeline(scene, cfg, ps, !trace_path.empty());

    save_bundle(result.bundle, out);
    if (!report_path.empty()) result.report.save(report_path);
    if (!params_out.empty()) ps.save(params_out);
    if (!trace_path.empty()) {
        if (cfg.fusion != Fusion::full) {
            std::fprintf(stderr, "--trace only applies to fusion=full; skipping\n");
        } else {
            save_named_tensors(trace_path, {{"o3d_projected", result.trace.o3d_projected.value()},
                                            {"o2d_projected", result.trace.o2d_projected.value()},
                                            {"o3d_attended", result.trace.o3d_attended.value()},
                                            {"view_tokens", result.trace.view_tokens.value()},
                                            {"fused", result.trace.fused.value()}});
        }
    }

    const RunReport& r = result.report;
    std::printf("tokens: %zu instance + %zu scene = %zu  (baselines: separate %zu, parallel %zu, "
                "cross-attn %zu)\n",
                r.instance_tokens, r.scene_tokens, r.total_tokens, r.baseline_separate,
                r.baseline_parallel, r.baseline_cross_attention);
    if (!r.unobserved.empty()) {
        std::printf("unobserved instances:");
        for (int id : r.unobserved) std::printf(" %d", id);
        std::printf("\n");
    }
    for (const auto& c : r.checks) {
        std::printf("[%s] %s (%s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    }
    return r.all_checks_pass() ? 0 : 1;
}

int cmd_verify(const std::string& suite, const std::string& fault, std::uint64_t seed,
               const std::string& report_path) {
    Faults faults;
    if (fault == "spatial_symmetry") faults.spatial_symmetry = true;
    else if (fault == "gradients") faults.gradient_offset = 1e-2;
    else if (fault == "oracles") faults.oracle = true;
    else if (fault != "none") throw std::invalid_argument("unknown fault '" + fault + "'");

    const auto reports = run_suites(suite, faults, seed);
    for (const auto& r : reports) {
        for (const auto& c : r.checks) {
            std::printf("[%s] %s/%s: %.3g (tolerance %.3g) %s\n", c.pass ? "PASS" : "FAIL",
                        r.suite.c_str(), c.name.c_str(), c.metric, c.tolerance, c.detail.c_str());
        }
    }
    if (!report_path.empty()) {
        std::FILE* f = std::fopen(report_path.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot write " + report_path);
        const std::string text = suites_to_json(reports);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
    }
    return suites_all_pass(reports) ? 0 : 1;
}

int cmd_ablate(const std::string& grid_path, const std::string& out) {
    const AblationGrid grid = load_ablation_grid(grid_path);
    const Scene scene = synth_scene(grid.scene);
    const AblationReport report = ablate(scene, grid.variants);
    if (!out.empty()) report.save(out);

    std::printf("%-20s %-16s %7s %12s %12s %12s\n", "variant", "fusion", "tokens", "token_norm",
                "cos_spread", "rot_sens");
    for (const auto& row : report.rows) {
        std::printf("%-20s %-16s %7zu %12.5f %12.5f %12.5g\n", row.name.c_str(), row.fusion.c_str(),
                    row.total_tokens, row.mean_token_norm, row.cosine_spread,
                    row.rotation_sensitivity);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"instance/scene tokenization pipeline"};
    app.require_subcommand(1);

    SynthConfig synth_cfg;
    std::string synth_out = "scene.json";
    auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-D scene");
    synth->add_option("--seed", synth_cfg.seed, "scene seed");
    synth->add_option("--instances", synth_cfg.n_instances, "instance count");
    synth->add_option("--frames", synth_cfg.n_frames, "camera frame count");
    synth->add_option("--points", synth_cfg.points_per_instance, "points per instance");
    synth->add_option("--width", synth_cfg.width, "image width");
    synth->add_option("--height", synth_cfg.height, "image height");
    synth->add_option("--out", synth_out, "output scene file")->required();

    std::string run_scene, run_config, run_out = "bundle.bin", run_report, run_params_in,
                run_params_out, run_trace;
    auto* run = app.add_subcommand("run", "tokenize a scene");
    run->add_option("--scene", run_scene, "scene file")->required();
    run->add_option("--config", run_config, "pipeline config (defaults when omitted)");
    run->add_option("--out", run_out, "output token bundle");
    run->add_option("--report", run_report, "run report file");
    run->add_option("--params", run_params_in, "load parameters from a checkpoint");
    run->add_option("--save-params", run_params_out, "write parameters to a checkpoint");
    run->add_option("--trace", run_trace, "dump fusion intermediates (named-tensor file)");

    std::string verify_suite = "all", verify_fault = "none", verify_report;
    std::uint64_t verify_seed = 17;
    auto* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--suite", verify_suite, "gradients|invariants|oracles|all");
    verify->add_option("--inject-fault", verify_fault,
                       "none|spatial_symmetry|gradients|oracles (self-test: the suite must fail)");
    verify->add_option("--seed", verify_seed, "suite data seed");
    verify->add_option("--report", verify_report, "machine-readable report file");

    std::string ablate_grid, ablate_out;
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep a config grid on one scene");
    ablate_cmd->add_option("--grid", ablate_grid, "grid file")->required();
    ablate_cmd->add_option("--out", ablate_out, "report file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_cfg, synth_out);
        if (run->parsed()) {
            return cmd_run(run_scene, run_config, run_out, run_report, run_params_in,
                           run_params_out, run_trace);
        }
        if (verify->parsed()) return cmd_verify(verify_suite, verify_fault, verify_seed, verify_report);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_grid, ablate_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
