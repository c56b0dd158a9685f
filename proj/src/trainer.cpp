#include "landseg/train/trainer.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <atomic>
#include <thread>

#include "landseg/core/render.hpp"
#include "landseg/infer/metrics.hpp"

namespace landseg {

using ad::Var;

void TrainConfig::validate() const {
    if (!(lr_final < lr_init)) throw ValidationError("train: lr_final must be below lr_init");
    if (!(lr_init > 0.0)) throw ValidationError("train: lr_init must be positive");
    if (spectral_lr_scale < 0.0)
        throw ValidationError("train: spectral lr scale must be non-negative");
    if (batch_size < 1) throw ValidationError("train: batch size must be positive");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ValidationError("train: val fraction must be in [0,1)");
    loss.validate();
}

Config TrainConfig::to_config() const {
    Config c;
    c.set_int("train.epochs", epochs);
    c.set_int("train.max_steps", max_steps);
    c.set_double("train.lr", lr_init);
    c.set_double("train.lr_final", lr_final);
    c.set_double("train.spectral_lr_scale", spectral_lr_scale);
    c.set_double("train.weight_decay", weight_decay);
    c.set_int("train.batch_size", batch_size);
    c.set_int("train.crop", crop);
    c.set_double("train.flip_p", flip_p);
    c.set_double("train.rot_p", rot_p);
    c.set_bool("train.augment", augment);
    c.set_bool("train.aux_decoder", aux_decoder);
    c.set_double("train.val_fraction", val_fraction);
    c.set_int("train.seed", static_cast<long>(seed));
    c.set_bool("loss.ce", loss.ce);
    c.set_bool("loss.dice", loss.dice);
    c.set_bool("loss.bce", loss.bce);
    c.set_bool("loss.bdice", loss.bdice);
    c.set_double("loss.eps", loss.eps);
    return c;
}

TrainConfig TrainConfig::from_config(const Config& c) {
    TrainConfig t;
    t.epochs = c.get_int("train.epochs", 50);
    t.max_steps = c.get_int("train.max_steps", -1);
    t.lr_init = c.get_double("train.lr", 1e-4);
    t.lr_final = c.get_double("train.lr_final", 1e-6);
    t.spectral_lr_scale = c.get_double("train.spectral_lr_scale", 0.1);
    t.weight_decay = c.get_double("train.weight_decay", 0.01);
    t.batch_size = static_cast<int>(c.get_int("train.batch_size", 4));
    t.crop = static_cast<int>(c.get_int("train.crop", 256));
    t.flip_p = c.get_double("train.flip_p", 0.5);
    t.rot_p = c.get_double("train.rot_p", 0.5);
    t.augment = c.get_bool("train.augment", true);
    t.aux_decoder = c.get_bool("train.aux_decoder", true);
    t.val_fraction = c.get_double("train.val_fraction", 0.1);
    t.seed = static_cast<uint64_t>(c.get_int("train.seed", 0));
    t.loss.ce = c.get_bool("loss.ce", true);
    t.loss.dice = c.get_bool("loss.dice", true);
    t.loss.bce = c.get_bool("loss.bce", true);
    t.loss.bdice = c.get_bool("loss.bdice", true);
    t.loss.eps = c.get_double("loss.eps", 1.0);
    t.validate();
    return t;
}

namespace {

TensorD crop_grid(const TensorD& grid /*[C,H,W]*/, int y0, int x0, int side) {
    const int c = grid.dim(0);
    TensorD out({c, side, side});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) out.at(ch, y, x) = grid.at(ch, y0 + y, x0 + x);
    return out;
}

TensorI crop_labels(const TensorI& grid, int y0, int x0, int side) {
    TensorI out({side, side});
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) out.at(y, x) = grid.at(y0 + y, x0 + x);
    return out;
}

// flip axis: 0 horizontal (x), 1 vertical (y); rot: quarter turns ccw
template <class T>
Tensor<T> transform_planes(const Tensor<T>& in, int channels, int side, bool flip, int axis,
                           int rot) {
    Tensor<T> out = in;
    auto idx = [&](int c, int y, int x) {
        return (static_cast<Eigen::Index>(c) * side + y) * side + x;
    };
    Tensor<T> tmp = in;
    if (flip) {
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    out.data[idx(c, y, x)] =
                        axis == 0 ? tmp.data[idx(c, y, side - 1 - x)]
                                  : tmp.data[idx(c, side - 1 - y, x)];
        tmp = out;
    }
    for (int r = 0; r < rot; ++r) {
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    out.data[idx(c, y, x)] = tmp.data[idx(c, x, side - 1 - y)];
        tmp = out;
    }
    return out;
}

}  // namespace

Trainer::Trainer(LandSegmenter& model, const DatasetHandle& data, TrainConfig cfg)
    : model_(model), data_(data), cfg_(cfg), opt_(nn::AdamWConfig{0.9, 0.999, 1e-8,
                                                                  cfg.weight_decay}),
      rng_(mix_seed(cfg.seed, "trainer")) {
    cfg_.validate();
    if (data_.subsets().empty()) throw ValidationError("trainer: dataset has no subsets");

    opt_.set_lr_scale("spectral_embed.", cfg_.spectral_lr_scale);

    // Deterministic held-out split per subset.
    for (const auto& sub : data_.subsets()) {
        std::vector<int> idx(static_cast<size_t>(sub.patches));
        for (int i = 0; i < sub.patches; ++i) idx[static_cast<size_t>(i)] = i;
        Rng srng(mix_seed(cfg_.seed, "split/" + sub.id));
        srng.shuffle(idx);
        const int n_val = std::min(
            sub.patches - 1,
            static_cast<int>(std::floor(cfg_.val_fraction * sub.patches)));
        std::vector<int> val(idx.begin(), idx.begin() + n_val);
        std::vector<int> train(idx.begin() + n_val, idx.end());
        std::sort(val.begin(), val.end());
        std::sort(train.begin(), train.end());
        val_indices_[sub.id] = std::move(val);
        train_indices_[sub.id] = std::move(train);
        prompt_sets_[sub.id] = embed_names(model_.text(), sub.taxonomy);
    }

    long batches_per_epoch = 0;
    for (const auto& [id, idx] : train_indices_)
        batches_per_epoch +=
            (static_cast<long>(idx.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
    total_steps_ = cfg_.epochs * batches_per_epoch;
    if (cfg_.max_steps > 0) total_steps_ = std::min(total_steps_, cfg_.max_steps);
    if (total_steps_ < 1) throw ValidationError("trainer: no training steps planned");
}

Sample Trainer::load_training_sample(const SubsetInfo& sub, int index, Rng& aug_rng) {
    MultispectralImage img = data_.load_image(sub.id, index);
    LabelMask lab = data_.load_label(sub.id, index);
    MultispectralImage norm = LandSegmenter::normalize(img, sub.stat_mean, sub.stat_stddev);

    const int stride = model_.config().backbone.downsample[3];
    int side = std::min({cfg_.crop, norm.height(), norm.width()});
    side = std::max(stride, side / stride * stride);

    int y0 = 0, x0 = 0;
    if (cfg_.augment) {
        if (norm.height() > side) y0 = aug_rng.uniform_int(norm.height() - side + 1);
        if (norm.width() > side) x0 = aug_rng.uniform_int(norm.width() - side + 1);
    }
    TensorD pixels = crop_grid(norm.pixels, y0, x0, side);
    TensorI labels = crop_labels(lab.classes, y0, x0, side);

    if (cfg_.augment) {
        const bool do_flip = aug_rng.uniform() < cfg_.flip_p;
        const int axis = do_flip ? aug_rng.uniform_int(2) : 0;
        const bool do_rot = aug_rng.uniform() < cfg_.rot_p;
        const int rot = do_rot ? 1 + aug_rng.uniform_int(3) : 0;
        if (do_flip || rot) {
            pixels = transform_planes(pixels, pixels.dim(0), side, do_flip, axis, rot);
            labels = transform_planes(labels, 1, side, do_flip, axis, rot);
        }
    }

    Sample s;
    s.image.pixels = std::move(pixels);
    s.image.wavelengths = norm.wavelengths;
    s.image.gsd = norm.gsd;
    s.image.subset_id = sub.id;
    s.label = lab;
    s.label.classes = std::move(labels);
    s.subset_id = sub.id;
    return s;
}

int Trainer::loader_workers() {
    const char* s = std::getenv("LANDSEG_NUM_WORKERS");
    if (!s) return 1;
    const int n = std::atoi(s);
    return n > 1 ? n : 1;
}

// Per-item RNG streams are derived from (seed, step, slot), so the loaded
// batch is identical for any worker count.
std::vector<Sample> Trainer::load_batch_items(const SubsetInfo& sub,
                                              const std::vector<int>& indices, long step) {
    std::vector<Sample> items(indices.size());
    auto load_one = [&](size_t slot) {
        Rng rng = rng_.split("aug/" + std::to_string(step) + "/" + std::to_string(slot));
        items[slot] = load_training_sample(sub, indices[slot], rng);
    };
    const int workers = std::min<int>(loader_workers(), static_cast<int>(indices.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < indices.size(); ++i) load_one(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&]() {
                for (size_t i = next.fetch_add(1); i < indices.size(); i = next.fetch_add(1))
                    load_one(i);
            });
        for (auto& th : pool) th.join();
    }
    return items;
}

StepMetrics Trainer::train_step(const Batch& batch, long step_index) {
    if (batch.items.empty()) throw ValidationError("train_step: empty batch");
    const bool use_aux = cfg_.aux_decoder && model_.aux_decoder() != nullptr &&
                         (step_index % 2 == 0);  // odd batches -> main decoder

    for (auto* p : model_.all_params()) p->zero_grad();

    ad::Graph g;
    nn::Binder b(g);
    Rng prompt_rng = rng_.split("prompts/" + std::to_string(step_index));
    const auto& prompts_all = prompt_sets_.at(batch.subset_id);
    auto prompts = sample_prompts(prompts_all, PromptMode::train, &prompt_rng);

    LossVars sum{};
    bool first = true;
    LossVars acc{};
    for (const auto& item : batch.items) {
        Var z = model_.logits(b, item.image, prompts, use_aux);
        LossVars lv = combined_loss(b, z, item.label, cfg_.loss);
        if (first) {
            acc = lv;
            first = false;
        } else {
            acc.total = ad::add(g, acc.total, lv.total);
            acc.ce = ad::add(g, acc.ce, lv.ce);
            acc.dice = ad::add(g, acc.dice, lv.dice);
            acc.bce = ad::add(g, acc.bce, lv.bce);
            acc.bdice = ad::add(g, acc.bdice, lv.bdice);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.items.size());
    sum.total = ad::scale(g, acc.total, inv);
    sum.ce = ad::scale(g, acc.ce, inv);
    sum.dice = ad::scale(g, acc.dice, inv);
    sum.bce = ad::scale(g, acc.bce, inv);
    sum.bdice = ad::scale(g, acc.bdice, inv);

    StepMetrics m;
    m.step = step_index;
    m.subset = batch.subset_id;
    m.used_aux = use_aux;
    m.loss = loss_values(g, sum);
    if (!std::isfinite(m.loss.total))
        throw DivergenceError("divergence: non-finite loss at step " +
                              std::to_string(step_index));

    g.backward(sum.total);
    auto touched = b.harvest();
    m.lr = nn::cosine_lr(step_index - 1, total_steps_, cfg_.lr_init, cfg_.lr_final);
    opt_.step(m.lr, touched);
    return m;
}

double Trainer::validate() {
    double subset_sum = 0.0;
    int subset_count = 0;
    for (const auto& sub : data_.subsets()) {
        const auto& val = val_indices_.at(sub.id);
        if (val.empty()) continue;
        auto prompts = sample_prompts(prompt_sets_.at(sub.id), PromptMode::infer, nullptr);
        Eigen::MatrixXd confusion;
        for (int idx : val) {
            MultispectralImage img = data_.load_image(sub.id, idx);
            LabelMask lab = data_.load_label(sub.id, idx);
            MultispectralImage norm =
                LandSegmenter::normalize(img, sub.stat_mean, sub.stat_stddev);
            ProbabilityStack probs = model_.infer(norm, prompts, sub.taxonomy.taxonomy_id);
            EvalResult r = evaluate(probs.argmax_labels(), lab);
            if (confusion.size() == 0) {
                confusion = r.confusion;
            } else {
                const int k = std::max(confusion.rows(), r.confusion.rows());
                Eigen::MatrixXd grown = Eigen::MatrixXd::Zero(k, k);
                grown.topLeftCorner(confusion.rows(), confusion.cols()) = confusion;
                grown.topLeftCorner(r.confusion.rows(), r.confusion.cols()) += r.confusion;
                confusion = grown;
            }
        }
        // subset mIoU from the accumulated confusion
        double iou_sum = 0.0;
        int classes = 0;
        for (Eigen::Index c = 0; c < confusion.rows(); ++c) {
            const double tp = confusion(c, c);
            const double fp = confusion.col(c).sum() - tp;
            const double fn = confusion.row(c).sum() - tp;
            if (tp + fp + fn <= 0) continue;
            iou_sum += tp / (tp + fp + fn);
            ++classes;
        }
        if (classes > 0) {
            subset_sum += iou_sum / classes;
            ++subset_count;
        }
    }
    return subset_count > 0 ? subset_sum / subset_count : 0.0;
}

FitResult Trainer::fit(const std::filesystem::path& out_dir, long start_step) {
    std::filesystem::create_directories(out_dir);
    const bool append = start_step > 0 && std::filesystem::exists(out_dir / "metrics.csv");
    std::ofstream metrics(out_dir / "metrics.csv", append ? std::ios::app : std::ios::out);
    if (!metrics) throw IoError("cannot write metrics log");
    if (!append) metrics << "step,subset,lr,total,ce,dice,bce,bdice\n";

    {
        std::ofstream splits(out_dir / "splits.txt");
        for (const auto& [id, idx] : val_indices_)
            for (int i : idx) splits << id << " " << i << "\n";
    }

    FitResult result;
    result.best_val_miou = -1.0;
    long step = start_step;
    std::map<std::string, std::vector<double>> subset_curves;  // per-subset loss curves
    bool first_loss = true;

    Config echo = cfg_.to_config();
    echo.merge(model_.config().to_config());

    for (long epoch = 0; step < total_steps_ && epoch < cfg_.epochs; ++epoch) {
        // Per-subset shuffled batch queues, drained round-robin: every batch
        // holds samples of a single subset (single taxonomy).
        struct Queue {
            const SubsetInfo* sub;
            std::vector<int> order;
            size_t pos = 0;
        };
        std::vector<Queue> queues;
        for (const auto& sub : data_.subsets()) {
            Queue q;
            q.sub = &sub;
            q.order = train_indices_.at(sub.id);
            Rng erng = rng_.split("epoch/" + std::to_string(epoch) + "/" + sub.id);
            erng.shuffle(q.order);
            queues.push_back(std::move(q));
        }
        bool any = true;
        while (any && step < total_steps_) {
            any = false;
            for (auto& q : queues) {
                if (q.pos >= q.order.size() || step >= total_steps_) continue;
                any = true;
                Batch batch;
                batch.subset_id = q.sub->id;
                batch.taxonomy_id = q.sub->taxonomy.taxonomy_id;
                std::vector<int> indices;
                for (int i = 0; i < cfg_.batch_size && q.pos < q.order.size(); ++i, ++q.pos)
                    indices.push_back(q.order[q.pos]);
                batch.items = load_batch_items(*q.sub, indices, step + 1);
                ++step;
                StepMetrics m = train_step(batch, step);
                if (first_loss) {
                    result.initial_loss = m.loss.total;
                    first_loss = false;
                }
                result.final_loss = m.loss.total;
                subset_curves[m.subset].push_back(m.loss.total);
                metrics << m.step << "," << m.subset << "," << m.lr << "," << m.loss.total << ","
                        << m.loss.ce << "," << m.loss.dice << "," << m.loss.bce << ","
                        << m.loss.bdice << "\n";
            }
        }
        metrics.flush();

        // ties favor the later (more trained) checkpoint; datasets too small
        // for a held-out split always keep the newest one
        const double val_miou = validate();
        result.final_val_miou = val_miou;
        if (val_miou >= result.best_val_miou) {
            result.best_val_miou = val_miou;
            result.best_checkpoint = out_dir / "ckpt_best.bin";
            model_.save_checkpoint(result.best_checkpoint, echo, step);
        }
    }

    result.steps = step;
    result.last_checkpoint = out_dir / "ckpt_last.bin";
    model_.save_checkpoint(result.last_checkpoint, echo, step);
    if (result.best_checkpoint.empty()) {
        result.best_checkpoint = result.last_checkpoint;
        result.best_val_miou = result.final_val_miou;
    }
    if (!subset_curves.empty()) {
        std::vector<std::vector<double>> series;
        for (const auto& [id, curve] : subset_curves) series.push_back(curve);
        render_line_chart(out_dir / "loss_curve.bmp", series);
    }
    return result;
}

}  // namespace landseg
