#include "landseg/model/hf.hpp"

#include <limits>

namespace landseg {

int nearest_band(const Eigen::VectorXd& wavelengths, double target_um) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < wavelengths.size(); ++i) {
        const double d = std::abs(wavelengths[i] - target_um);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

std::array<int, 3> resolve_rgb_bands(const Eigen::VectorXd& wavelengths) {
    if (wavelengths.size() < 3)
        throw ValidationError("hf: need at least 3 bands to resolve RGB");
    return {nearest_band(wavelengths, kRedWavelength),
            nearest_band(wavelengths, kGreenWavelength),
            nearest_band(wavelengths, kBlueWavelength)};
}

TensorD hf_channel(const TensorD& band, double mask_ratio) {
    if (band.rank() != 2) throw ValidationError("hf_channel: band must be [H,W]");
    const int h = band.dim(0), w = band.dim(1);
    Eigen::MatrixXd m(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) m(r, c) = band.at(r, c);
    Eigen::MatrixXd res = fourier_highpass(m, mask_ratio);
    TensorD out({h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out.at(r, c) = res(r, c);
    return out;
}

TensorD hf_stack(const MultispectralImage& image, double mask_ratio) {
    image.validate();
    const int c = image.channels(), h = image.height(), w = image.width();
    const auto rgb = resolve_rgb_bands(image.wavelengths);

    std::vector<TensorD> per_band;
    per_band.reserve(static_cast<size_t>(c));
    for (int b = 0; b < c; ++b) {
        TensorD band({h, w});
        band.data = image.pixels.data.segment(static_cast<Eigen::Index>(b) * h * w,
                                              static_cast<Eigen::Index>(h) * w);
        per_band.push_back(hf_channel(band, mask_ratio));
    }

    TensorD out({6, h, w});
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (int i = 0; i < 3; ++i)
        out.data.segment(i * hw, hw) = per_band[static_cast<size_t>(rgb[static_cast<size_t>(i)])].data;
    auto mn = out.data.segment(3 * hw, hw);
    auto mx = out.data.segment(4 * hw, hw);
    auto mean = out.data.segment(5 * hw, hw);
    mn = per_band[0].data;
    mx = per_band[0].data;
    mean = per_band[0].data;
    for (int b = 1; b < c; ++b) {
        mn = mn.min(per_band[static_cast<size_t>(b)].data);
        mx = mx.max(per_band[static_cast<size_t>(b)].data);
        mean += per_band[static_cast<size_t>(b)].data;
    }
    mean /= static_cast<double>(c);
    return out;
}

}  // namespace landseg
