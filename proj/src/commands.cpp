#include "landseg/cli/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "landseg/core/container.hpp"
#include "landseg/core/render.hpp"
#include "landseg/data/synth.hpp"
#include "landseg/infer/fusion.hpp"
#include "landseg/model/model.hpp"
#include "landseg/train/trainer.hpp"

namespace landseg::cli {

namespace {

namespace fs = std::filesystem;

void write_echo(const fs::path& out_dir, const Config& cfg) {
    fs::create_directories(out_dir);
    cfg.save(out_dir / "config_echo.txt");
}

void cmd_gen_data(const std::string& spec_path, const std::string& out, long seed, bool force) {
    SyntheticSceneSpec spec =
        spec_path.empty()
            ? SyntheticSceneSpec::las_default(seed >= 0 ? static_cast<uint64_t>(seed) : 0)
            : SyntheticSceneSpec::parse_file(spec_path);
    if (seed >= 0) spec.seed = static_cast<uint64_t>(seed);
    spec.validate();

    const fs::path root(out);
    if (fs::exists(root) && !fs::is_empty(root) && !force)
        throw Error("output directory exists and is not empty (use --force): " + out);
    generate_scene(spec, root);
    Config echo = spec.to_config();
    echo.set("command", "gen-data");
    write_echo(root, echo);
    std::cout << "generated " << spec.subsets.size() << " subsets under " << out << "\n";
}

void cmd_train(const std::string& data_dir, const std::string& config_path,
               const std::string& out, const std::string& resume) {
    DatasetHandle data = DatasetHandle::open(data_dir);
    Config cfg;
    if (!config_path.empty()) cfg = Config::parse_file(config_path);
    TrainConfig tc = TrainConfig::from_config(cfg);

    std::unique_ptr<LandSegmenter> model;
    long start_step = 0;
    if (!resume.empty()) {
        auto loaded = LandSegmenter::load_checkpoint(resume);
        model = std::move(loaded.model);
        start_step = loaded.step;
    } else {
        ModelConfig mc = ModelConfig::from_config(cfg);
        mc.aux_decoder = tc.aux_decoder;
        model = std::make_unique<LandSegmenter>(mc);
    }
    for (const auto& sub : data.subsets())
        model->band_stats()[sub.id] = BandStats{sub.stat_mean, sub.stat_stddev};

    Trainer trainer(*model, data, tc);
    FitResult result = trainer.fit(out, start_step);

    Config echo = tc.to_config();
    echo.merge(model->config().to_config());
    echo.set("command", "train");
    echo.set("data", data_dir);
    echo.set_int("trained_steps", result.steps);
    echo.set_double("best_val_miou", result.best_val_miou);
    write_echo(out, echo);
    std::cout << "trained " << result.steps << " steps; val mIoU best " << result.best_val_miou
              << " final " << result.final_val_miou << "\n";
}

void cmd_zero_shot(const std::string& ckpt, const std::string& image_path,
                   const std::string& taxonomy_path, const std::string& out) {
    auto loaded = LandSegmenter::load_checkpoint(ckpt);
    LandSegmenter& model = *loaded.model;
    MultispectralImage image = read_image(image_path);
    ClassTaxonomy taxonomy = ClassTaxonomy::load(taxonomy_path);

    MultispectralImage normalized = [&] {
        auto it = model.band_stats().find(image.subset_id);
        if (it != model.band_stats().end() &&
            it->second.mean.size() == image.channels())
            return LandSegmenter::normalize(image, it->second.mean, it->second.stddev);
        return LandSegmenter::normalize_per_image(image);
    }();

    PromptSet prompts = embed_names(model.text(), taxonomy);
    auto canonical = sample_prompts(prompts, PromptMode::infer, nullptr);
    ProbabilityStack probs = model.infer(normalized, canonical, taxonomy.taxonomy_id);

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    write_probstack(out_dir / "probs.bin", probs);
    LabelMask pred;
    pred.classes = probs.argmax_labels();
    pred.taxonomy_id = taxonomy.taxonomy_id;
    write_label(out_dir / "labels.bin", pred);
    render_label_map(out_dir / "map.bmp", pred.classes, taxonomy, pred.ignore_value);

    Config echo;
    echo.set("command", "zero-shot");
    echo.set("checkpoint", ckpt);
    echo.set("image", image_path);
    echo.set("taxonomy", taxonomy.taxonomy_id);
    echo.set_int("classes", taxonomy.size());
    write_echo(out_dir, echo);
    std::cout << "zero-shot map with " << taxonomy.size() << " classes written to " << out
              << "\n";
}

void cmd_fuse(const std::string& land_path, const std::string& clip_path,
              const std::string& gt_path, double ct, bool sweep, const std::string& out) {
    ProbabilityStack land = read_probstack(land_path);
    ProbabilityStack clip = read_probstack(clip_path);
    FusionConfig cfg;
    cfg.c_t = ct;
    FusionResult fused = fuse(land, clip, cfg);

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    write_probstack(out_dir / "fused_probs.bin", fused.normalized);
    LabelMask pred;
    pred.classes = fused.labels;
    pred.taxonomy_id = land.taxonomy_id;
    write_label(out_dir / "fused_labels.bin", pred);

    Config echo;
    echo.set("command", "fuse");
    echo.set_double("fusion.c_t", cfg.c_t);
    echo.set_double("fusion.w_low_land", cfg.w_low_land);
    echo.set_double("fusion.w_low_clip", cfg.w_low_clip);
    echo.set_double("fusion.w_balanced", cfg.w_balanced);

    if (!gt_path.empty()) {
        LabelMask gt = read_label(gt_path);
        EvalResult r = evaluate(fused.labels, gt);
        std::ofstream metrics(out_dir / "metrics.txt");
        metrics.precision(10);
        metrics << "mIoU " << r.miou << "\nOA " << r.oa << "\n";
        for (int c : r.classes_evaluated)
            metrics << "IoU_" << c << " " << r.per_class_iou[c] << "\n";
        echo.set_double("miou", r.miou);
        echo.set_double("oa", r.oa);

        if (sweep) {
            auto rows = threshold_sweep(land, clip, gt, default_sweep_thresholds());
            write_sweep_csv(out_dir / "sweep.csv", rows);
            std::vector<double> mious;
            for (const auto& row : rows) mious.push_back(row.miou);
            render_line_chart(out_dir / "sweep.bmp", {mious});
        }
    } else if (sweep) {
        throw Error("--sweep needs --gt to score the fused maps");
    }
    write_echo(out_dir, echo);
    std::cout << "fused maps written to " << out << "\n";
}

void cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out) {
    auto list_bins = [](const fs::path& dir) {
        if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".bin")
                names.push_back(e.path().filename().string());
        std::sort(names.begin(), names.end());
        return names;
    };
    auto preds = list_bins(pred_dir);
    auto gts = list_bins(gt_dir);
    if (preds.empty() || gts.empty()) throw Error("eval: empty prediction or ground-truth directory");
    if (preds != gts) {
        std::string offenders;
        for (const auto& n : preds)
            if (std::find(gts.begin(), gts.end(), n) == gts.end()) offenders += " " + n;
        for (const auto& n : gts)
            if (std::find(preds.begin(), preds.end(), n) == preds.end()) offenders += " " + n;
        throw Error("eval: filename mismatch between directories:" + offenders);
    }

    Eigen::MatrixXd confusion;
    for (const auto& name : preds) {
        LabelMask pred = read_label(fs::path(pred_dir) / name);
        LabelMask gt = read_label(fs::path(gt_dir) / name);
        EvalResult r = evaluate(pred.classes, gt);
        if (confusion.size() == 0) {
            confusion = r.confusion;
        } else {
            const Eigen::Index k = std::max(confusion.rows(), r.confusion.rows());
            Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(k, k);
            grown.topLeftCorner(confusion.rows(), confusion.cols()) = confusion;
            grown.topLeftCorner(r.confusion.rows(), r.confusion.cols()) += r.confusion;
            confusion = grown;
        }
    }

    const fs::path out_dir(out);
    fs::create_directories(out_dir);
    std::ofstream report(out_dir / "report.txt");
    report.precision(10);
    double iou_sum = 0.0;
    int evaluated = 0;
    std::ofstream csv(out_dir / "per_class_iou.csv");
    csv << "class,iou\n";
    for (Eigen::Index c = 0; c < confusion.rows(); ++c) {
        const double tp = confusion(c, c);
        const double fp = confusion.col(c).sum() - tp;
        const double fn = confusion.row(c).sum() - tp;
        if (tp + fp + fn <= 0) continue;
        const double iou = tp / (tp + fp + fn);
        report << "IoU_" << c << " " << iou << "\n";
        csv << c << "," << iou << "\n";
        iou_sum += iou;
        ++evaluated;
    }
    const double miou = iou_sum / std::max(evaluated, 1);
    const double oa = confusion.trace() / confusion.sum();
    report << "mIoU " << miou << "\nOA " << oa << "\n";
    render_heatmap(out_dir / "confusion.bmp", confusion);

    Config echo;
    echo.set("command", "eval");
    echo.set_double("miou", miou);
    echo.set_double("oa", oa);
    echo.set_int("pairs", static_cast<long>(preds.size()));
    write_echo(out_dir, echo);
    std::cout << "eval over " << preds.size() << " pairs: mIoU " << miou << " OA " << oa << "\n";
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"landseg: open-vocabulary land-cover segmentation toolkit"};
    app.require_subcommand(1);

    std::string spec, out, data, config, resume, ckpt, image, taxonomy;
    std::string land, clip_stack, gt, pred_dir, gt_dir;
    long seed = -1;
    bool force = false, sweep = false;
    double ct = 0.6;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-subset dataset");
    gen->add_option("--spec", spec, "scene spec file (key-value); omitted = LAS-style default");
    gen->add_option("--out", out, "output dataset directory")->required();
    gen->add_option("--seed", seed, "generation seed (overrides spec)");
    gen->add_flag("--force", force, "overwrite a non-empty output directory");

    auto* train = app.add_subcommand("train", "train on a generated dataset");
    train->add_option("--data", data, "dataset directory")->required();
    train->add_option("--config", config, "training config file");
    train->add_option("--out", out, "run output directory")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");

    auto* zs = app.add_subcommand("zero-shot", "segment one image with a class-name taxonomy");
    zs->add_option("--ckpt", ckpt, "model checkpoint")->required();
    zs->add_option("--image", image, "input image container")->required();
    zs->add_option("--taxonomy", taxonomy, "taxonomy text file")->required();
    zs->add_option("--out", out, "output directory")->required();

    auto* fu = app.add_subcommand("fuse", "confidence-guided fusion of two probability stacks");
    fu->add_option("--land", land, "segmenter probability stack")->required();
    fu->add_option("--clip", clip_stack, "CLIP-side probability stack")->required();
    fu->add_option("--gt", gt, "ground-truth label mask (enables metrics)");
    fu->add_option("--ct", ct, "confidence threshold");
    fu->add_flag("--sweep", sweep, "run the default threshold sweep (needs --gt)");
    fu->add_option("--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "batch-evaluate label maps against ground truth");
    ev->add_option("--pred", pred_dir, "directory of predicted label masks")->required();
    ev->add_option("--gt", gt_dir, "directory of ground-truth label masks")->required();
    ev->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) cmd_gen_data(spec, out, seed, force);
        else if (train->parsed()) cmd_train(data, config, out, resume);
        else if (zs->parsed()) cmd_zero_shot(ckpt, image, taxonomy, out);
        else if (fu->parsed()) cmd_fuse(land, clip_stack, gt, ct, sweep, out);
        else if (ev->parsed()) cmd_eval(pred_dir, gt_dir, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.push_back("landseg");
    for (const auto& a : args) full.push_back(a);
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace landseg::cli
