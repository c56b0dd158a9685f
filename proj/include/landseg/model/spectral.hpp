#pragma once

#include <array>
#include <utility>

#include "landseg/core/types.hpp"
#include "landseg/nn/attention.hpp"
#include "landseg/nn/param.hpp"

namespace landseg {

// Wavelength-conditioned hypernetwork embedder: a small 12-layer trunk whose
// patch-embedding kernels are generated per band from the band's central
// wavelength, with intermediate features tapped at four block-aligned depths.
struct SpectralConfig {
    int depth = 12;
    int embed_dim = 64;
    int patch = 8;
    int heads = 4;
    int mlp_hidden = 128;
    std::array<int, 4> out_layers{1, 4, 9, 11};
    int wave_feats = 32;    // sinusoidal features of log-wavelength
    int hyper_hidden = 64;
    bool pos_enc = true;

    void validate() const {
        if (depth < 1) throw ValidationError("spectral: depth must be positive");
        int prev = -1;
        for (int l : out_layers) {
            if (l <= prev || l >= depth)
                throw ValidationError("spectral: output layer indices must be strictly "
                                      "increasing and below depth");
            prev = l;
        }
        if (embed_dim % heads != 0)
            throw ValidationError("spectral: embed dim must divide by heads");
        if (wave_feats % 2 != 0) throw ValidationError("spectral: wave_feats must be even");
    }
};

class SpectralEmbedder {
public:
    SpectralEmbedder(SpectralConfig cfg, uint64_t seed);

    const SpectralConfig& config() const { return cfg_; }

    // Sinusoidal features of log-wavelength covering 0.44 to 12 micrometers.
    Eigen::VectorXd wavelength_features(double wavelength_um) const;

    // Value-level kernel generation: [C, D, p, p] kernels and [C, D] biases.
    // Equal wavelengths produce bit-identical kernels.
    std::pair<TensorD, TensorD> make_kernels(const Eigen::VectorXd& wavelengths) const;

    // Four tapped feature grids [D, H/p, W/p], one per backbone block.
    std::array<ad::Var, 4> features(nn::Binder& b, const TensorD& pixels /*[C,H,W]*/,
                                    const Eigen::VectorXd& wavelengths);

    nn::ParamSet& params() { return params_; }
    const nn::ParamSet& params() const { return params_; }

private:
    SpectralConfig cfg_;
    nn::ParamSet params_;

    // Tape-level per-band kernel + bias from the hypernetwork.
    std::pair<ad::Var, ad::Var> kernel_for(nn::Binder& b, double wavelength_um);
    TensorD positional_encoding(int th, int tw) const;
};

}  // namespace landseg
