#pragma once

#include <array>

#include "landseg/core/fourier.hpp"
#include "landseg/core/types.hpp"

namespace landseg {

struct HFConfig {
    double mask_ratio = 0.25;  // fraction of the centered spectrum removed

    void validate() const {
        if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
            throw ValidationError("hf: mask ratio must be in [0,1)");
    }
};

// Reference RGB wavelengths in micrometers used to pick the R/G/B bands by
// nearest central wavelength.
constexpr double kRedWavelength = 0.665;
constexpr double kGreenWavelength = 0.560;
constexpr double kBlueWavelength = 0.490;

int nearest_band(const Eigen::VectorXd& wavelengths, double target_um);

// Indices of the bands closest to R, G, B. Requires C >= 3.
std::array<int, 3> resolve_rgb_bands(const Eigen::VectorXd& wavelengths);

// Fourier high-pass of a single band.
TensorD hf_channel(const TensorD& band /*[H,W]*/, double mask_ratio);

// Six-channel high-frequency stack: [HF(R), HF(G), HF(B), per-pixel min,
// max, mean over all bands' HF channels].
TensorD hf_stack(const MultispectralImage& image, double mask_ratio);

}  // namespace landseg
