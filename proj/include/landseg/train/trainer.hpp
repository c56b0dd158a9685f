#pragma once

#include <filesystem>

#include "landseg/model/model.hpp"
#include "landseg/nn/adamw.hpp"
#include "landseg/train/loss.hpp"

namespace landseg {

struct TrainConfig {
    long epochs = 50;
    long max_steps = -1;  // cap on optimizer steps; -1 = epochs decide
    double lr_init = 1e-4;
    double lr_final = 1e-6;
    double spectral_lr_scale = 0.1;  // 0 freezes the spectral embedder
    double weight_decay = 0.01;
    int batch_size = 4;
    int crop = 256;
    double flip_p = 0.5;
    double rot_p = 0.5;
    bool augment = true;
    bool aux_decoder = true;
    double val_fraction = 0.1;
    uint64_t seed = 0;
    LossConfig loss;

    void validate() const;
    Config to_config() const;
    static TrainConfig from_config(const Config& cfg);
};

struct Sample {
    MultispectralImage image;  // normalized
    LabelMask label;
    std::string subset_id;
};

struct Batch {
    std::vector<Sample> items;
    std::string subset_id;
    std::string taxonomy_id;
};

struct StepMetrics {
    long step = 0;
    std::string subset;
    double lr = 0;
    LossValues loss;
    bool used_aux = false;
};

struct FitResult {
    long steps = 0;
    double initial_loss = 0;
    double final_loss = 0;
    double best_val_miou = 0;
    double final_val_miou = 0;
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
};

// Multi-subset training loop: round-robin over per-subset batch queues (one
// taxonomy per batch), cosine learning-rate schedule, strict odd/even
// alternation between the main and auxiliary decoders, frozen backbone and
// text tower, reduced rate for the spectral embedder.
class Trainer {
public:
    Trainer(LandSegmenter& model, const DatasetHandle& data, TrainConfig cfg);

    StepMetrics train_step(const Batch& batch, long step_index);

    FitResult fit(const std::filesystem::path& out_dir, long start_step = 0);

    const nn::AdamW& optimizer() const { return opt_; }
    const std::map<std::string, std::vector<int>>& val_indices() const { return val_indices_; }
    const std::map<std::string, std::vector<int>>& train_indices() const {
        return train_indices_;
    }
    long planned_total_steps() const { return total_steps_; }

    // Mean mIoU over held-out items of every subset with canonical prompts.
    double validate();

private:
    LandSegmenter& model_;
    const DatasetHandle& data_;
    TrainConfig cfg_;
    nn::AdamW opt_;
    Rng rng_;
    long total_steps_ = 0;
    std::map<std::string, std::vector<int>> train_indices_;
    std::map<std::string, std::vector<int>> val_indices_;
    std::map<std::string, PromptSet> prompt_sets_;

    Sample load_training_sample(const SubsetInfo& sub, int index, Rng& aug_rng);
    std::vector<Sample> load_batch_items(const SubsetInfo& sub, const std::vector<int>& indices,
                                         long step);
    static int loader_workers();
};

}  // namespace landseg
