#include "ctrec/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ctrec {

GenResult run_gen(const RunConfig& cfg, const std::string& out_dir) {
    GenResult res;
    res.manifest = generate_dataset(cfg.synth, out_dir);
    split_train_test(res.manifest, cfg.pipeline.train_fraction,
                     derive_seed(cfg.seed, hash_str("split")));
    filter_categories(res.manifest);
    res.balance = balance_test_domains(res.manifest, derive_seed(cfg.seed, hash_str("balance")));

    res.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    save_manifest(res.manifest, res.manifest_path);

    const CountTable counts = res.manifest.train_counts();
    json report;
    report["classes"] = res.manifest.class_names;
    json per_class = json::array();
    const DomainStats stats = compute_stats(counts);
    for (size_t c = 0; c < counts.size(); ++c) {
        json e;
        e["class"] = res.manifest.class_names[c];
        e["train_day"] = counts[c][0];
        e["train_night"] = counts[c][1];
        e["imbalance_ratio"] = stats.per_class[c].imbalance_ratio;
        json dom = json::array();
        if (stats.per_class[c].day_dominant) dom.push_back("day");
        if (stats.per_class[c].night_dominant) dom.push_back("night");
        e["dominant"] = dom;
        per_class.push_back(std::move(e));
    }
    report["per_class"] = std::move(per_class);
    json subsampled = json::array();
    for (const auto& r : res.balance.subsampled) {
        subsampled.push_back({{"class", res.manifest.class_names[r.class_label]},
                              {"domain", to_string(r.domain)},
                              {"removed", r.removed}});
    }
    report["test_balance_subsampled"] = std::move(subsampled);
    json dropped = json::array();
    for (int c : res.balance.classes_dropped_from_test)
        dropped.push_back(res.manifest.class_names[c]);
    report["classes_dropped_from_test"] = std::move(dropped);

    res.report_path = (fs::path(out_dir) / "gen_report.json").string();
    std::ofstream f(res.report_path);
    if (!f) throw IoError("run_gen: cannot open " + res.report_path);
    f << report.dump(2) << "\n";
    return res;
}

EvalOutputs run_eval(const ExpertModel& model, const CheckpointMeta& meta,
                     const DatasetManifest& manifest, const RunConfig::Eval& options,
                     const std::string& out_dir) {
    if (model.config.num_classes != manifest.num_classes())
        throw InputMismatchError(
            "eval: checkpoint was trained for " + std::to_string(model.config.num_classes) +
            " classes but the manifest has " + std::to_string(manifest.num_classes()));
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("run_eval: cannot create " + out_dir + ": " + ec.message());

    const Predictor predictor(model, meta, options.domain_tolerance);
    EvalOutputs out;
    std::vector<Prediction> first_frame;
    for (const auto& s : manifest.samples) {
        if (s.split != Split::test) continue;
        const int n_frames = options.per_frame ? 3 : 1;
        for (int j = 0; j < n_frames; ++j) {
            Prediction p = predictor.predict(png_read(manifest.frame_path(s, j)));
            p.sequence_id = s.id;
            p.frame = j;
            p.y_true = s.class_label;
            if (j == 0) first_frame.push_back(p);
            out.predictions.push_back(std::move(p));
        }
    }
    out.report = evaluate(first_frame, manifest);

    out.predictions_path = (fs::path(out_dir) / "predictions.jsonl").string();
    save_predictions(out.predictions, out.predictions_path);
    out.report_json_path = (fs::path(out_dir) / "report.json").string();
    {
        std::ofstream f(out.report_json_path);
        if (!f) throw IoError("run_eval: cannot open " + out.report_json_path);
        f << report_to_json(out.report);
    }
    out.report_text_path = (fs::path(out_dir) / "report.txt").string();
    {
        std::ofstream f(out.report_text_path);
        if (!f) throw IoError("run_eval: cannot open " + out.report_text_path);
        f << report_to_text(out.report);
    }
    return out;
}

}  // namespace ctrec
