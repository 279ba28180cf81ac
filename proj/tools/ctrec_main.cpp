#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctrec/pipeline.hpp"
#include "ctrec/trainer.hpp"
#include "ctrec/viz.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required = true) {
    cmd->add_option("--config", args.config_path, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "config override, key.path=value (repeatable)");
    auto* seed = cmd->add_option_function<uint64_t>(
        "--seed", [&args](uint64_t s) { args.seed = s; }, "master seed override");
    seed->expected(1);
    auto* out = cmd->add_option("--out", args.out_dir, "output directory");
    if (out_required) out->required();
}

int run_gen_cmd(const CommonArgs& args) {
    const ctrec::RunConfig cfg =
        ctrec::load_run_config(args.config_path, args.overrides, args.seed);
    const ctrec::GenResult res = ctrec::run_gen(cfg, args.out_dir);
    int train = 0, test = 0;
    for (const auto& s : res.manifest.samples)
        (s.split == ctrec::Split::train ? train : test)++;
    std::printf("gen: %d classes, %d train / %d test sequences\n", res.manifest.num_classes(),
                train, test);
    std::printf("gen: manifest written to %s\n", res.manifest_path.c_str());
    return 0;
}

int run_train_cmd(const CommonArgs& args, const std::string& manifest_path, bool no_de,
                  bool no_fc) {
    ctrec::RunConfig cfg = ctrec::load_run_config(args.config_path, args.overrides, args.seed);
    if (no_de) cfg.train.domain_experts = false;
    if (no_fc) cfg.train.flow_consistency = false;
    const ctrec::DatasetManifest manifest = ctrec::load_manifest(manifest_path);
    const ctrec::FitResult res = ctrec::fit(manifest, cfg.model, cfg.train, args.out_dir);
    std::printf("train: best epoch %d (loss %.6f)\n", res.best_epoch, res.best_loss);
    std::printf("train: final checkpoint %s\n", res.final_checkpoint.c_str());
    return 0;
}

int run_eval_cmd(const CommonArgs& args, const std::string& checkpoint_path,
                 const std::string& manifest_path, bool per_frame) {
    ctrec::RunConfig cfg = ctrec::load_run_config(args.config_path, args.overrides, args.seed);
    if (per_frame) cfg.eval.per_frame = true;
    auto [model, meta] = ctrec::load_checkpoint(checkpoint_path);
    const ctrec::DatasetManifest manifest = ctrec::load_manifest(manifest_path);
    const ctrec::EvalOutputs out =
        ctrec::run_eval(model, meta, manifest, cfg.eval, args.out_dir);
    std::printf("%s", ctrec::report_to_text(out.report).c_str());
    std::printf("eval: report written to %s\n", out.report_json_path.c_str());
    return 0;
}

int run_viz_cmd(const CommonArgs& args, const std::string& checkpoint_path,
                const std::string& manifest_path, const std::vector<std::string>& ids,
                const std::string& expert) {
    (void)ctrec::load_run_config(args.config_path, args.overrides, args.seed);
    auto [model, meta] = ctrec::load_checkpoint(checkpoint_path);
    const ctrec::DatasetManifest manifest = ctrec::load_manifest(manifest_path);
    ctrec::VizOptions options;
    options.sequence_ids = ids;
    options.expert = expert;
    const ctrec::VizResult res = ctrec::render_sequences(model, manifest, options, args.out_dir);
    std::printf("viz: wrote %zu images\n", res.written.size());
    for (const auto& id : res.skipped_ids)
        std::fprintf(stderr, "viz: unknown sequence id '%s', skipped\n", id.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-tailed multi-domain camera-trap recognition toolkit"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, viz_args;
    std::string manifest_path, checkpoint_path;
    std::vector<std::string> viz_ids;
    std::string viz_expert = "full";
    bool no_de = false, no_fc = false, per_frame = false;

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset + manifest");
    add_common(gen, gen_args);

    CLI::App* train = app.add_subcommand("train", "train the domain-expert model");
    add_common(train, train_args);
    train->add_option("--manifest", manifest_path, "dataset manifest")->required();
    train->add_flag("--no-domain-experts", no_de, "disable the day/night experts (DE ablation)");
    train->add_flag("--no-flow-consistency", no_fc, "disable the flow consistency loss (FC ablation)");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
    eval->add_flag("--per-frame", per_frame, "also dump per-frame predictions");

    CLI::App* viz = app.add_subcommand("viz", "render CAM overlays and flow maps");
    add_common(viz, viz_args);
    viz->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    viz->add_option("--manifest", manifest_path, "dataset manifest")->required();
    viz->add_option("--ids", viz_ids, "sequence ids to render (default: all)")->delimiter(',');
    viz->add_option("--expert", viz_expert, "expert head for CAMs: full|day|night|auto");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return run_gen_cmd(gen_args);
        if (train->parsed()) return run_train_cmd(train_args, manifest_path, no_de, no_fc);
        if (eval->parsed()) return run_eval_cmd(eval_args, checkpoint_path, manifest_path, per_frame);
        if (viz->parsed()) return run_viz_cmd(viz_args, checkpoint_path, manifest_path, viz_ids, viz_expert);
    } catch (const ctrec::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ctrec::InputMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
