#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>

#include "landseg/core/config.hpp"
#include "landseg/data/synth.hpp"
#include "landseg/model/decoder.hpp"
#include "landseg/model/encoder.hpp"
#include "landseg/model/hf.hpp"
#include "landseg/model/spectral.hpp"
#include "landseg/model/text.hpp"

namespace landseg {

struct ModelConfig {
    SpectralConfig spectral;
    BackboneConfig backbone;
    DecoderConfig decoder;
    TextEncoderConfig text;
    HFConfig hf;
    bool aux_decoder = true;
    bool afm_enabled = true;
    uint64_t seed = 0;

    // Desk-scale defaults wired for 64-pixel patches; dependent dimensions
    // (decoder widths, upsample strides) are derived in finalize().
    void finalize();
    Config to_config() const;
    static ModelConfig from_config(const Config& cfg);
};

// The full segmenter: frozen text tower, wavelength-conditioned spectral
// embedder, frozen hierarchical backbone with AFM adapters, and one or two
// (main + auxiliary) text-prompted decoders.
class LandSegmenter {
public:
    explicit LandSegmenter(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    TextEncoder& text() { return *text_; }
    const TextEncoder& text() const { return *text_; }
    SpectralEmbedder& spectral() { return *spectral_; }
    FusionEncoder& encoder() { return *encoder_; }
    SegDecoder& main_decoder() { return *decoder_; }
    SegDecoder* aux_decoder() { return aux_decoder_.get(); }

    // Standardize per band; zero-variance bands get unit scale.
    static MultispectralImage normalize(const MultispectralImage& image,
                                        const Eigen::VectorXd& mean,
                                        const Eigen::VectorXd& stddev);
    // Per-image standardization fallback when no subset stats are known.
    static MultispectralImage normalize_per_image(const MultispectralImage& image);

    // Tape-level forward to K-class logits at input resolution.
    ad::Var logits(nn::Binder& b, const MultispectralImage& normalized,
                   const std::vector<Eigen::VectorXd>& prompts, bool use_aux = false);

    // Value-level inference with canonical prompts.
    ProbabilityStack infer(const MultispectralImage& normalized,
                           const std::vector<Eigen::VectorXd>& prompts,
                           const std::string& taxonomy_id);

    EncoderFeatures encode_values(const MultispectralImage& normalized);

    // Parameter groups.
    std::vector<nn::Parameter*> all_params();
    std::vector<nn::Parameter*> trainable_params();
    std::vector<const nn::Parameter*> group(const std::string& prefix) const;

    // Per-subset normalization statistics carried with the model.
    std::map<std::string, BandStats>& band_stats() { return band_stats_; }
    const std::map<std::string, BandStats>& band_stats() const { return band_stats_; }

    void save_checkpoint(const std::filesystem::path& path, const Config& extra_echo,
                         long step) const;
    struct Loaded {
        std::unique_ptr<LandSegmenter> model;
        Config echo;
        long step = 0;
    };
    static Loaded load_checkpoint(const std::filesystem::path& path);

private:
    ModelConfig cfg_;
    std::unique_ptr<TextEncoder> text_;
    std::unique_ptr<SpectralEmbedder> spectral_;
    std::unique_ptr<FusionEncoder> encoder_;
    std::unique_ptr<SegDecoder> decoder_;
    std::unique_ptr<SegDecoder> aux_decoder_;
    std::map<std::string, BandStats> band_stats_;
};

}  // namespace landseg
