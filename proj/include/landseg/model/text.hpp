#pragma once

#include <string>
#include <vector>

#include "landseg/core/rng.hpp"
#include "landseg/core/types.hpp"
#include "landseg/nn/param.hpp"

namespace landseg {

struct TextEncoderConfig {
    int embed_dim = 96;
    int layers = 2;
    int heads = 4;
    int mlp_hidden = 192;
    int max_tokens = 32;
    uint64_t seed = 0x7e57;
};

// Frozen deterministic text tower: vocabulary hashing for token embeddings
// (no stored table) followed by a small fixed transformer, mean pooling and
// L2 normalization. Stands in for an external CLIP-style text encoder; the
// interface only assumes embed() is a deterministic string -> unit vector.
class TextEncoder {
public:
    explicit TextEncoder(TextEncoderConfig cfg = {});

    Eigen::VectorXd embed(const std::string& name) const;
    int embed_dim() const { return cfg_.embed_dim; }

    // Frozen parameters, exposed so freeze contracts can be asserted.
    std::vector<nn::Parameter*> parameters() { return params_.all(); }
    std::vector<const nn::Parameter*> parameters() const { return params_.all(); }
    nn::ParamSet& param_set() { return params_; }

private:
    TextEncoderConfig cfg_;
    nn::ParamSet params_;

    Eigen::VectorXd token_embedding(const std::string& token) const;
};

struct PromptSet {
    std::string taxonomy_id;
    // per class, one embedding per name variant; index 0 is canonical
    std::vector<std::vector<Eigen::VectorXd>> class_variants;

    int num_classes() const { return static_cast<int>(class_variants.size()); }
    int dim() const { return static_cast<int>(class_variants.front().front().size()); }
};

enum class PromptMode { train, infer };

PromptSet embed_names(const TextEncoder& encoder, const ClassTaxonomy& taxonomy);

// train: one uniformly sampled variant per class per call; infer: canonical.
std::vector<Eigen::VectorXd> sample_prompts(const PromptSet& prompts, PromptMode mode, Rng* rng);

enum class SilhouetteReduction { identity, tsne };

// Mean silhouette over points; singleton clusters contribute 0; a == b == 0
// ties contribute 0. Rejects single-class inputs.
double silhouette_score(const Eigen::MatrixXd& points /*N x D*/,
                        const Eigen::VectorXi& labels,
                        SilhouetteReduction reduction = SilhouetteReduction::identity,
                        uint64_t seed = 0);

// Exact (O(N^2)) t-SNE with deterministic PCA initialization; adequate for
// the small text-embedding sets this project evaluates.
Eigen::MatrixXd tsne_reduce(const Eigen::MatrixXd& points, int out_dim = 2,
                            double perplexity = 12.0, int iters = 400, uint64_t seed = 0);

}  // namespace landseg
