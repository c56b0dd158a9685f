// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code 0 iff all pass.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "landseg/cli/commands.hpp"
#include "landseg/core/container.hpp"
#include "landseg/data/synth.hpp"
#include "landseg/infer/fusion.hpp"
#include "landseg/model/clip_standin.hpp"
#include "landseg/model/hf.hpp"
#include "landseg/model/model.hpp"
#include "landseg/train/trainer.hpp"
#include "oracles.hpp"

using namespace landseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
    int id;
    std::string name;
    std::function<void(std::string&)> body;  // throws on failure, fills detail on success
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

ProbabilityStack random_stack(int k, int h, int w, Rng& rng, const std::string& tax = "t") {
    TensorD probs({k, h, w});
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (Eigen::Index p = 0; p < hw; ++p) {
        double sum = 0;
        for (int c = 0; c < k; ++c) {
            const double v = -std::log(1.0 - rng.uniform() + 1e-12);
            probs.data[c * hw + p] = v;
            sum += v;
        }
        for (int c = 0; c < k; ++c) probs.data[c * hw + p] /= sum;
    }
    return ProbabilityStack::from_probs(std::move(probs), tax);
}

ModelConfig micro_model_config() {
    ModelConfig m;
    m.spectral.embed_dim = 4;
    m.spectral.patch = 4;
    m.spectral.heads = 2;
    m.spectral.mlp_hidden = 8;
    m.spectral.wave_feats = 8;
    m.spectral.hyper_hidden = 8;
    m.backbone.widths = {4, 8, 16, 32};
    m.backbone.downsample = {2, 4, 8, 16};
    m.backbone.layers_per_block = 1;
    m.decoder.heads = 2;
    m.decoder.ffn_hidden = 16;
    m.decoder.out_feat = 4;
    m.text.embed_dim = 8;
    m.text.layers = 1;
    m.text.heads = 2;
    m.text.mlp_hidden = 16;
    m.aux_decoder = false;
    m.seed = 17;
    m.finalize();
    return m;
}

// Shared end-to-end artifacts produced once and consumed by criteria 8-10.
struct E2EArtifacts {
    fs::path base;
    fs::path data_dir;
    fs::path run_dir;
    fs::path tax4;
    double train_seconds = 0;
    double model_miou = 0;   // zero-shot on clean validation labels
    double oracle_miou = 0;  // nearest-class-spectrum classifier, same split
    long trained_steps = 0;
    std::vector<int> weak_val_indices;
    ProbabilityStack land_stack;  // first weak validation image
    ProbabilityStack clip_stack;
    LabelMask clean_gt;
    bool ready = false;
    std::string failure;
};

E2EArtifacts g_e2e;

void write_e2e_scene(const fs::path& path) {
    std::ofstream out(path);
    out << "scene.seed = 29\n"
           "scene.alignment = 32\n"
           "scene.subsets = exact,weak\n"
           "subset.exact.patches = 20\n"
           "subset.exact.patch_size = 64\n"
           "subset.exact.num_classes = 4\n"
           "subset.exact.noise_rate = 0\n"
           "subset.exact.gsd = 10\n"
           "subset.exact.wavelengths = 0.49,0.56,0.665,0.842,1.61,2.19\n"
           "subset.exact.classes = water,tree,crop,building\n"
           "subset.weak.patches = 20\n"
           "subset.weak.patch_size = 64\n"
           "subset.weak.num_classes = 4\n"
           "subset.weak.noise_rate = 0.3\n"
           "subset.weak.gsd = 10\n"
           "subset.weak.wavelengths = 0.49,0.56,0.665,0.842,1.61,2.19\n"
           "subset.weak.classes = water,tree,crop,building\n";
}

void write_e2e_train_config(const fs::path& path) {
    std::ofstream out(path);
    out << "model.spectral.embed_dim = 16\n"
           "model.spectral.patch = 8\n"
           "model.spectral.heads = 4\n"
           "model.spectral.mlp_hidden = 32\n"
           "model.spectral.wave_feats = 16\n"
           "model.spectral.hyper_hidden = 16\n"
           "model.backbone.width0 = 8\n"
           "model.backbone.stride0 = 4\n"
           "model.backbone.layers_per_block = 2\n"
           "model.decoder.heads = 4\n"
           "model.decoder.ffn_hidden = 64\n"
           "model.decoder.out_feat = 16\n"
           "model.text.embed_dim = 32\n"
           "model.text.layers = 2\n"
           "model.text.heads = 4\n"
           "model.text.mlp_hidden = 64\n"
           "model.seed = 101\n"
           "train.epochs = 200\n"
           "train.max_steps = 900\n"
           "train.batch_size = 3\n"
           "train.crop = 64\n"
           "train.lr = 0.002\n"
           "train.lr_final = 1e-5\n"
           "train.weight_decay = 0.001\n"
           "train.seed = 31\n"
           "train.augment = true\n"
           "train.aux_decoder = true\n";
}

void build_e2e() {
    g_e2e.base = fs::temp_directory_path() / "landseg_acceptance";
    fs::remove_all(g_e2e.base);
    fs::create_directories(g_e2e.base);
    g_e2e.data_dir = g_e2e.base / "data";
    g_e2e.run_dir = g_e2e.base / "run";

    const auto t0 = Clock::now();
    write_e2e_scene(g_e2e.base / "scene.txt");
    require(cli::run({"gen-data", "--spec", (g_e2e.base / "scene.txt").string(), "--out",
                      g_e2e.data_dir.string(), "--seed", "29"}) == 0,
            "gen-data failed");

    write_e2e_train_config(g_e2e.base / "train.cfg");
    require(cli::run({"train", "--data", g_e2e.data_dir.string(), "--config",
                      (g_e2e.base / "train.cfg").string(), "--out",
                      g_e2e.run_dir.string()}) == 0,
            "train failed");
    g_e2e.train_seconds = seconds_since(t0);
    {
        Config echo = Config::parse_file(g_e2e.run_dir / "config_echo.txt");
        g_e2e.trained_steps = echo.get_int("trained_steps", 0);
    }

    g_e2e.tax4 = g_e2e.base / "tax4.txt";
    {
        std::ofstream out(g_e2e.tax4);
        out << "taxonomy_id\tweak_tax\n0\twater\n1\ttree\n2\tcrop\n3\tbuilding\n";
    }

    // weak-subset validation indices from the trainer's split file
    {
        std::ifstream in(g_e2e.run_dir / "splits.txt");
        std::string subset;
        int idx;
        while (in >> subset >> idx)
            if (subset == "weak") g_e2e.weak_val_indices.push_back(idx);
    }
    require(!g_e2e.weak_val_indices.empty(), "no weak validation split recorded");

    // zero-shot every weak validation image; evaluate against the clean sidecar
    DatasetHandle data = DatasetHandle::open(g_e2e.data_dir);
    const SubsetInfo& weak = data.subset("weak");
    fs::path pred_dir = g_e2e.base / "pred";
    fs::path gt_dir = g_e2e.base / "gt";
    fs::create_directories(pred_dir);
    fs::create_directories(gt_dir);
    bool first = true;
    for (int idx : g_e2e.weak_val_indices) {
        char name[16];
        std::snprintf(name, sizeof(name), "%06d.bin", idx);
        fs::path zs_out = g_e2e.base / ("zs_" + std::to_string(idx));
        require(cli::run({"zero-shot", "--ckpt", (g_e2e.run_dir / "ckpt_best.bin").string(),
                          "--image", data.image_path("weak", idx).string(), "--taxonomy",
                          g_e2e.tax4.string(), "--out", zs_out.string()}) == 0,
                "zero-shot failed");
        fs::copy_file(zs_out / "labels.bin", pred_dir / name);
        fs::copy_file(data.label_path("weak", idx, /*clean=*/true), gt_dir / name);
        if (first) {
            g_e2e.land_stack = read_probstack(zs_out / "probs.bin");
            g_e2e.clean_gt = read_label(data.label_path("weak", idx, true));
            first = false;
        }
    }
    fs::path eval_out = g_e2e.base / "eval";
    require(cli::run({"eval", "--pred", pred_dir.string(), "--gt", gt_dir.string(), "--out",
                      eval_out.string()}) == 0,
            "eval failed");
    g_e2e.model_miou = Config::parse_file(eval_out / "config_echo.txt").get_double("miou", 0.0);

    // clean-oracle: nearest-class-spectrum classifier on the same split
    {
        Eigen::MatrixXd spectra(4, weak.wavelengths.size());
        for (int cls = 0; cls < 4; ++cls)
            for (int b = 0; b < weak.wavelengths.size(); ++b)
                spectra(cls, b) = class_spectrum(
                    weak.taxonomy.classes[static_cast<size_t>(cls)].canonical(),
                    weak.wavelengths[b]);
        Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(4, 4);
        for (int idx : g_e2e.weak_val_indices) {
            MultispectralImage img = data.load_image("weak", idx);
            LabelMask gt = data.load_label("weak", idx, true);
            const Eigen::Index hw = static_cast<Eigen::Index>(img.height()) * img.width();
            for (Eigen::Index p = 0; p < hw; ++p) {
                if (gt.classes(p) == gt.ignore_value) continue;
                int best = 0;
                double bd = 1e300;
                for (int cls = 0; cls < 4; ++cls) {
                    double d = 0;
                    for (int b = 0; b < weak.wavelengths.size(); ++b) {
                        const double e = img.pixels.data[b * hw + p] - spectra(cls, b);
                        d += e * e;
                    }
                    if (d < bd) {
                        bd = d;
                        best = cls;
                    }
                }
                confusion(gt.classes(p), best) += 1.0;
            }
        }
        double iou_sum = 0;
        int counted = 0;
        for (int c = 0; c < 4; ++c) {
            const double tp = confusion(c, c);
            const double denom = confusion.row(c).sum() + confusion.col(c).sum() - tp;
            if (denom <= 0) continue;
            iou_sum += tp / denom;
            ++counted;
        }
        g_e2e.oracle_miou = iou_sum / std::max(counted, 1);
    }

    // CLIP-side stand-in fitted on the weak subset's training split
    {
        std::vector<int> train_idx;
        for (int i = 0; i < weak.patches; ++i)
            if (std::find(g_e2e.weak_val_indices.begin(), g_e2e.weak_val_indices.end(), i) ==
                g_e2e.weak_val_indices.end())
                train_idx.push_back(i);
        ClipStandin clip = ClipStandin::fit(data, "weak", train_idx);
        MultispectralImage img = data.load_image("weak", g_e2e.weak_val_indices.front());
        g_e2e.clip_stack = clip.predict(img);
        g_e2e.clip_stack.taxonomy_id = g_e2e.land_stack.taxonomy_id;
    }
    g_e2e.ready = true;
}

const E2EArtifacts& e2e() {
    if (!g_e2e.ready)
        throw Error("end-to-end pipeline unavailable: " +
                    (g_e2e.failure.empty() ? std::string("not built") : g_e2e.failure));
    return g_e2e;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria;

    criteria.push_back({1, "FFT round-trip and DC removal", [](std::string& detail) {
        const auto t0 = Clock::now();
        Rng rng(404);
        for (int trial = 0; trial < 50; ++trial) {
            const int h = 4 + rng.uniform_int(29);
            const int w = 4 + rng.uniform_int(29);
            TensorD band({h, w});
            for (Eigen::Index i = 0; i < band.numel(); ++i) band(i) = rng.normal();
            TensorD out = hf_channel(band, 0.0);
            const double rel =
                (out.data - band.data).abs().maxCoeff() / band.data.abs().maxCoeff();
            require(rel < 1e-6, "tau=0 round trip exceeded 1e-6 relative error");
        }
        for (int trial = 0; trial < 10; ++trial) {
            const double level = 0.5 + rng.uniform(0.0, 4.0);
            TensorD band = TensorD::full({16, 16}, level);
            TensorD out = hf_channel(band, 0.5);
            require(out.data.abs().maxCoeff() < 1e-6 * level,
                    "constant image did not map to ~0 at tau=0.5");
        }
        const double dt = seconds_since(t0);
        require(dt < 5.0, "runtime exceeded 5 s");
        std::ostringstream ss;
        ss.precision(3);
        ss << "50 round trips + 10 constants in " << dt << " s";
        detail = ss.str();
    }});

    criteria.push_back({2, "fusion bit-exact against scalar oracle", [](std::string& detail) {
        const auto t0 = Clock::now();
        Rng rng(405);
        for (int trial = 0; trial < 100; ++trial) {
            const int k = 2 + rng.uniform_int(7);
            const int h = 1 + rng.uniform_int(16);
            const int w = 1 + rng.uniform_int(16);
            ProbabilityStack land = random_stack(k, h, w, rng);
            ProbabilityStack clip = random_stack(k, h, w, rng);
            FusionConfig cfg;
            cfg.c_t = 0.05 + 0.9 * rng.uniform();
            FusionResult got = fuse(land, clip, cfg);
            TensorD want = oracles::fuse_reference(
                land.probs, clip.probs, land.class_confidences, clip.class_confidences,
                cfg.c_t, cfg.w_low_land, cfg.w_low_clip, cfg.w_balanced);
            require((got.unnormalized.data == want.data).all(),
                    "pre-normalization fusion differs from the scalar reference");
        }
        const double dt = seconds_since(t0);
        require(dt < 10.0, "runtime exceeded 10 s");
        std::ostringstream ss;
        ss.precision(3);
        ss << "100 instances bit-exact in " << dt << " s";
        detail = ss.str();
    }});

    criteria.push_back({3, "hand-derived fusion case (2.2, 2.5)", [](std::string& detail) {
        TensorD land({2, 1, 1}), clip({2, 1, 1});
        land.data << 0.9, 0.1;
        clip.data << 0.2, 0.8;
        FusionResult r = fuse(ProbabilityStack::from_probs(land, "t"),
                              ProbabilityStack::from_probs(clip, "t"), FusionConfig{});
        require(r.unnormalized.data[0] == 2.0 * 0.9 + 2.0 * 0.2,
                "class 0 weighted sum not bit-exact");
        require(r.unnormalized.data[1] == 1.0 * 0.1 + 3.0 * 0.8,
                "class 1 weighted sum not bit-exact");
        require(std::abs(r.unnormalized.data[0] - 2.2) < 1e-12, "class 0 != 2.2");
        require(std::abs(r.unnormalized.data[1] - 2.5) < 1e-12, "class 1 != 2.5");
        require(r.labels(0) == 1, "argmax is not class 1");
        detail = "unnormalized (2.2, 2.5), argmax class 1";
    }});

    criteria.push_back({4, "metric oracle agreement", [](std::string& detail) {
        Rng rng(406);
        for (int trial = 0; trial < 50; ++trial) {
            const int k = 2 + rng.uniform_int(5);
            const int side = 4 + rng.uniform_int(12);
            LabelMask gt;
            gt.classes = TensorI({side, side});
            TensorI pred({side, side});
            for (Eigen::Index p = 0; p < gt.classes.numel(); ++p) {
                gt.classes(p) = rng.uniform() < 0.1 ? 255 : rng.uniform_int(k);
                pred(p) = rng.uniform_int(k);
            }
            bool any = false;
            for (Eigen::Index p = 0; p < gt.classes.numel(); ++p)
                any |= gt.classes(p) != 255;
            if (!any) gt.classes(0) = 0;
            EvalResult got = evaluate(pred, gt);
            oracles::MetricsRef want = oracles::metrics_reference(pred, gt.classes, 255);
            require(std::abs(got.miou - want.miou) < 1e-12, "mIoU disagrees beyond 1e-12");
            require(std::abs(got.oa - want.oa) < 1e-12, "OA disagrees beyond 1e-12");
        }
        LabelMask gt;
        gt.classes = TensorI({2, 2});
        gt.classes.data << 0, 0, 1, 1;
        TensorI pred({2, 2});
        pred.data << 0, 1, 1, 1;
        EvalResult r = evaluate(pred, gt);
        require(std::abs(r.miou - 7.0 / 12.0) < 1e-15, "2x2 hand example mIoU != 7/12");
        detail = "50 random pairs to 1e-12; hand case exact";
    }});

    criteria.push_back({5, "gradient integrity of every trainable group", [](std::string& detail) {
        const auto t0 = Clock::now();
        LandSegmenter model(micro_model_config());

        MultispectralImage image;
        image.pixels = TensorD({3, 16, 16});
        Rng rng(407);
        for (Eigen::Index i = 0; i < image.pixels.numel(); ++i) image.pixels(i) = rng.normal();
        image.wavelengths = Eigen::Vector3d(0.49, 0.56, 0.665);
        image.subset_id = "probe";

        LabelMask target;
        target.classes = TensorI({16, 16});
        for (Eigen::Index i = 0; i < 256; ++i) target.classes(i) = rng.uniform_int(2);

        std::vector<Eigen::VectorXd> prompts;
        for (const char* name : {"water", "building"})
            prompts.push_back(model.text().embed(name));

        auto loss_value = [&]() {
            ad::Graph g;
            nn::Binder b(g);
            ad::Var z = model.logits(b, image, prompts, false);
            LossVars v = combined_loss(b, z, target, LossConfig{});
            return g.val(v.total).data[0];
        };

        for (auto* p : model.all_params()) p->zero_grad();
        {
            ad::Graph g;
            nn::Binder b(g);
            ad::Var z = model.logits(b, image, prompts, false);
            LossVars v = combined_loss(b, z, target, LossConfig{});
            g.backward(v.total);
            b.harvest();
        }

        long checked = 0, tensors = 0;
        bool saw_afm = false, saw_spectral = false, saw_decoder = false;
        for (auto* p : model.trainable_params()) {
            ++tensors;
            saw_afm |= p->name.rfind("afm.", 0) == 0;
            saw_spectral |= p->name.rfind("spectral_embed.", 0) == 0;
            saw_decoder |= p->name.rfind("decoder.", 0) == 0;

            // every coordinate of every trainable tensor
            for (Eigen::Index idx = 0; idx < p->value.numel(); ++idx) {
                const double an = p->grad.data[idx];
                const double fd = oracles::fd_grad(*p, idx, loss_value, 1e-5);
                const double rtol = std::abs(an) > 1e-3 ? 1e-4 : 1e-3;
                if (!oracles::grad_close(an, fd, rtol, 1e-7))
                    throw Error("gradient mismatch at " + p->name + "[" + std::to_string(idx) +
                                "]: backprop " + std::to_string(an) + " vs fd " +
                                std::to_string(fd));
                ++checked;
            }
        }
        require(saw_afm && saw_spectral && saw_decoder, "a trainable group went unchecked");
        const double dt = seconds_since(t0);
        require(dt < 120.0, "runtime exceeded 2 minutes");
        std::ostringstream ss;
        ss.precision(3);
        ss << checked << " coords over " << tensors << " tensors in " << dt << " s";
        detail = ss.str();
    }});

    criteria.push_back({6, "loss sanity: saturation bound and hand value", [](std::string& detail) {
        LabelMask target;
        target.classes = TensorI({2, 2});
        target.classes.data << 0, 1, 1, 0;
        TensorD logits({2, 2, 2});
        const double margin = 50.0;
        for (Eigen::Index p = 0; p < 4; ++p)
            for (int c = 0; c < 2; ++c)
                logits.data[c * 4 + p] = c == target.classes(p) ? margin : -margin;
        {
            ad::Graph g;
            nn::Binder b(g);
            LossVars v = combined_loss(b, g.constant(logits), target, LossConfig{});
            require(loss_values(g, v).total < 1e-6,
                    "perfect prediction loss above the margin bound");
        }
        LabelMask one;
        one.classes = TensorI({1, 1});
        one.classes(0) = 0;
        ad::Graph g;
        nn::Binder b(g);
        LossVars v = combined_loss(b, g.constant(TensorD::zeros({2, 1, 1})), one, LossConfig{});
        LossValues got = loss_values(g, v);
        const double ln2 = std::log(2.0);
        require(std::abs(got.ce - ln2) < 1e-10, "CE != ln 2");
        require(std::abs(got.bce - 2 * ln2) < 1e-10, "BCE != 2 ln 2");
        require(std::abs(got.dice - (0.2 + 1.0 / 3.0) / 2.0) < 1e-10, "Dice hand value");
        require(std::abs(got.bdice - (0.2 + 1.0 / 3.0)) < 1e-10, "BDice hand value");
        require(std::abs(got.total - (3 * ln2 + 0.8)) < 1e-10, "total != 3 ln 2 + 0.8");
        detail = "saturated loss < 1e-6; uniform-logit case to 1e-10";
    }});

    criteria.push_back({7, "decoder alternation over 20 batches", [](std::string& detail) {
        fs::path dir = fs::temp_directory_path() / "landseg_acceptance_alt";
        fs::remove_all(dir);
        SyntheticSceneSpec spec;
        spec.seed = 55;
        SubsetSpec s;
        s.id = "alpha";
        s.patches = 6;
        s.patch_size = 32;
        s.wavelengths = Eigen::Vector4d(0.49, 0.56, 0.665, 0.842);
        s.num_classes = 3;
        spec.subsets = {s};
        DatasetHandle data = generate_scene(spec, dir);

        ModelConfig mc = micro_model_config();
        mc.aux_decoder = true;
        LandSegmenter model(mc);
        for (const auto& sub : data.subsets())
            model.band_stats()[sub.id] = BandStats{sub.stat_mean, sub.stat_stddev};
        TrainConfig tc;
        tc.batch_size = 2;
        tc.crop = 32;
        tc.augment = false;
        tc.epochs = 100;
        Trainer trainer(model, data, tc);

        const uint64_t text_before = nn::params_checksum(model.group("text."));
        const uint64_t backbone_before = nn::params_checksum(model.group("backbone."));
        const SubsetInfo& sub = data.subset("alpha");
        int main_updates = 0, aux_updates = 0;
        for (int step = 1; step <= 20; ++step) {
            Batch batch;
            batch.subset_id = "alpha";
            batch.taxonomy_id = sub.taxonomy.taxonomy_id;
            const auto& order = trainer.train_indices().at("alpha");
            for (int i = 0; i < 2; ++i) {
                const int idx = order[static_cast<size_t>(step + i) % order.size()];
                Sample sample;
                sample.image = LandSegmenter::normalize(data.load_image("alpha", idx),
                                                        sub.stat_mean, sub.stat_stddev);
                sample.label = data.load_label("alpha", idx);
                sample.subset_id = "alpha";
                batch.items.push_back(std::move(sample));
            }
            const uint64_t main_b = nn::params_checksum(model.group("decoder."));
            const uint64_t aux_b = nn::params_checksum(model.group("decoder_aux."));
            trainer.train_step(batch, step);
            main_updates += nn::params_checksum(model.group("decoder.")) != main_b;
            aux_updates += nn::params_checksum(model.group("decoder_aux.")) != aux_b;
        }
        require(main_updates == 10,
                "main decoder updated " + std::to_string(main_updates) + " times, expected 10");
        require(aux_updates == 10,
                "aux decoder updated " + std::to_string(aux_updates) + " times, expected 10");
        require(nn::params_checksum(model.group("text.")) == text_before,
                "text encoder checksum changed");
        require(nn::params_checksum(model.group("backbone.")) == backbone_before,
                "backbone checksum changed");
        detail = "10 main + 10 aux updates; frozen towers bit-identical";
    }});

    criteria.push_back({8, "class-flexibility of one trained checkpoint", [](std::string& detail) {
        const auto& art = e2e();
        auto loaded = LandSegmenter::load_checkpoint(art.run_dir / "ckpt_best.bin");
        LandSegmenter& model = *loaded.model;
        DatasetHandle data = DatasetHandle::open(art.data_dir);
        const SubsetInfo& weak = data.subset("weak");
        MultispectralImage img = data.load_image("weak", art.weak_val_indices.front());
        MultispectralImage norm = LandSegmenter::normalize(img, weak.stat_mean, weak.stat_stddev);

        for (int k : {3, 6, 14}) {
            std::vector<Eigen::VectorXd> prompts;
            for (int i = 0; i < k; ++i)
                prompts.push_back(
                    model.text().embed(class_name_pool()[static_cast<size_t>(i)].front()));
            ProbabilityStack probs = model.infer(norm, prompts, "flex");
            require(probs.num_classes() == k, "unexpected class count");
            probs.validate(1e-6);
        }

        std::vector<Eigen::VectorXd> prompts;
        for (int i = 0; i < 4; ++i)
            prompts.push_back(
                model.text().embed(class_name_pool()[static_cast<size_t>(i)].front()));
        const std::array<int, 4> perm{2, 0, 3, 1};
        std::vector<Eigen::VectorXd> permuted;
        for (int i : perm) permuted.push_back(prompts[static_cast<size_t>(i)]);
        ProbabilityStack a = model.infer(norm, prompts, "flex");
        ProbabilityStack b = model.infer(norm, permuted, "flex");
        const Eigen::Index hw = static_cast<Eigen::Index>(a.height()) * a.width();
        double max_dev = 0.0;
        for (int i = 0; i < 4; ++i)
            max_dev = std::max(max_dev,
                               (b.probs.data.segment(i * hw, hw) -
                                a.probs.data.segment(perm[static_cast<size_t>(i)] * hw, hw))
                                   .abs()
                                   .maxCoeff());
        require(max_dev < 1e-6,
                "permutation equivariance violated: " + std::to_string(max_dev));
        std::ostringstream ss;
        ss << "K in {3,6,14} valid simplices; permutation deviation " << max_dev;
        detail = ss.str();
    }});

    criteria.push_back({9, "end-to-end smoke with noise robustness", [](std::string& detail) {
        const auto& art = e2e();
        require(art.trained_steps <= 2000, "training exceeded 2000 steps");
        require(art.train_seconds < 1800.0, "gen+train exceeded 30 minutes");
        require(art.model_miou >= 0.60,
                "clean-validation mIoU " + std::to_string(art.model_miou) + " below 0.60");
        const double ceiling = (1.0 - 0.3) * art.oracle_miou;
        require(art.model_miou > ceiling,
                "clean-val mIoU " + std::to_string(art.model_miou) +
                    " does not exceed (1-0.3) * oracle mIoU = " + std::to_string(ceiling));
        std::ostringstream ss;
        ss.precision(4);
        ss << "mIoU " << art.model_miou << " > 0.7*oracle " << ceiling << " (oracle "
           << art.oracle_miou << "), " << art.trained_steps << " steps in " << art.train_seconds
           << " s";
        detail = ss.str();
    }});

    criteria.push_back({10, "threshold sweep robustness and limits", [](std::string& detail) {
        const auto& art = e2e();
        fs::path fuse_dir = art.base / "fuse";
        write_probstack(art.base / "land.bin", art.land_stack);
        write_probstack(art.base / "clip.bin", art.clip_stack);
        write_label(art.base / "gt.bin", art.clean_gt);
        require(cli::run({"fuse", "--land", (art.base / "land.bin").string(), "--clip",
                          (art.base / "clip.bin").string(), "--gt",
                          (art.base / "gt.bin").string(), "--ct", "0.6", "--sweep", "--out",
                          fuse_dir.string()}) == 0,
                "fuse --sweep failed");

        std::ifstream in(fuse_dir / "sweep.csv");
        std::string line;
        std::getline(in, line);
        std::vector<double> cts, mious;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string tok;
            std::getline(row, tok, ',');
            cts.push_back(std::stod(tok));
            std::getline(row, tok, ',');
            mious.push_back(std::stod(tok));
        }
        require(cts == std::vector<double>{0.4, 0.5, 0.6, 0.7, 0.8},
                "sweep grid is not {0.4..0.8}");
        const double mx = *std::max_element(mious.begin(), mious.end());
        const double mn = *std::min_element(mious.begin(), mious.end());
        require(mx > 0.0, "sweep produced zero mIoU");
        require((mx - mn) / mx < 0.10,
                "mIoU spread " + std::to_string((mx - mn) / mx) + " not below 10%");

        for (double ct : {1e-9, 1.0 - 1e-12}) {
            FusionConfig cfg;
            cfg.c_t = ct;
            FusionResult r = fuse(art.land_stack, art.clip_stack, cfg);
            TensorD want(art.land_stack.probs.shape);
            want.data = 2.0 * art.land_stack.probs.data + 2.0 * art.clip_stack.probs.data;
            require((r.unnormalized.data == want.data).all(),
                    "threshold limit did not reduce to the 2:2 branch");
        }
        std::ostringstream ss;
        ss.precision(4);
        ss << "mIoU in [" << mn << ", " << mx << "], spread " << (mx - mn) / mx * 100 << "%";
        detail = ss.str();
    }});

    criteria.push_back({11, "silhouette oracle and bounds", [](std::string& detail) {
        Eigen::MatrixXd pts(4, 2);
        pts << 0, 0, 0, 1, 10, 0, 10, 1;
        Eigen::VectorXi labels(4);
        labels << 0, 0, 1, 1;
        const double got = silhouette_score(pts, labels);
        require(std::abs(got - 0.9005) < 1e-3,
                "4-point hand example " + std::to_string(got) + " not within 1e-3 of 0.9005");
        const double b = (10.0 + std::sqrt(101.0)) / 2.0;
        require(std::abs(got - (b - 1.0) / b) < 1e-12, "closed form mismatch");

        Rng rng(409);
        for (int trial = 0; trial < 100; ++trial) {
            const int n = 4 + rng.uniform_int(20);
            const int k = 2 + rng.uniform_int(4);
            Eigen::MatrixXd rpts(n, 3);
            Eigen::VectorXi rlab(n);
            for (int i = 0; i < n; ++i) {
                rlab[i] = i < k ? i : rng.uniform_int(k);
                for (int j = 0; j < 3; ++j) rpts(i, j) = rng.normal();
            }
            const double s = silhouette_score(rpts, rlab);
            require(s >= -1.0 && s <= 1.0, "silhouette out of [-1,1]");
        }
        std::ostringstream ss;
        ss.precision(6);
        ss << "hand value " << got << "; 100 random inputs in bounds";
        detail = ss.str();
    }});

    try {
        build_e2e();
    } catch (const std::exception& e) {
        g_e2e.failure = e.what();
    }

    int failures = 0;
    for (const auto& c : criteria) {
        std::string detail;
        bool ok = true;
        std::string err;
        try {
            c.body(detail);
        } catch (const std::exception& e) {
            ok = false;
            err = e.what();
        }
        if (!ok) ++failures;
        std::printf("[%s] criterion %2d: %s -- %s\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    ok ? detail.c_str() : err.c_str());
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
