#include "landseg/core/fourier.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <vector>

#include "landseg/core/errors.hpp"

namespace landseg {

Eigen::MatrixXd fourier_highpass(const Eigen::MatrixXd& band, double mask_ratio) {
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
        throw ValidationError("fourier_highpass: mask ratio must be in [0,1)");
    const int h = static_cast<int>(band.rows());
    const int w = static_cast<int>(band.cols());
    if (h < 2 || w < 2) throw ValidationError("fourier_highpass: grid must be at least 2x2");
    if (mask_ratio == 0.0) return band;

    using Cplx = std::complex<double>;
    Eigen::FFT<double> fft;
    Eigen::Matrix<Cplx, Eigen::Dynamic, Eigen::Dynamic> freq(h, w);

    // Row transforms, then column transforms.
    {
        std::vector<Cplx> in(static_cast<size_t>(w)), out(static_cast<size_t>(w));
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) in[static_cast<size_t>(c)] = Cplx(band(r, c), 0.0);
            fft.fwd(out, in);
            for (int c = 0; c < w; ++c) freq(r, c) = out[static_cast<size_t>(c)];
        }
    }
    {
        std::vector<Cplx> in(static_cast<size_t>(h)), out(static_cast<size_t>(h));
        for (int c = 0; c < w; ++c) {
            for (int r = 0; r < h; ++r) in[static_cast<size_t>(r)] = freq(r, c);
            fft.fwd(out, in);
            for (int r = 0; r < h; ++r) freq(r, c) = out[static_cast<size_t>(r)];
        }
    }

    // Signed frequency of DFT bin k: k for k < (n+1)/2, else k - n. The
    // centered low-frequency rectangle is |f| <= floor(tau*n/2) on each axis.
    const int half_h = static_cast<int>(mask_ratio * h) / 2;
    const int half_w = static_cast<int>(mask_ratio * w) / 2;
    auto signed_freq = [](int k, int n) { return k < (n + 1) / 2 ? k : k - n; };
    for (int r = 0; r < h; ++r) {
        const int fr = std::abs(signed_freq(r, h));
        if (fr > half_h) continue;
        for (int c = 0; c < w; ++c) {
            if (std::abs(signed_freq(c, w)) <= half_w) freq(r, c) = Cplx(0.0, 0.0);
        }
    }

    // Inverse transforms.
    {
        std::vector<Cplx> in(static_cast<size_t>(h)), out(static_cast<size_t>(h));
        for (int c = 0; c < w; ++c) {
            for (int r = 0; r < h; ++r) in[static_cast<size_t>(r)] = freq(r, c);
            fft.inv(out, in);
            for (int r = 0; r < h; ++r) freq(r, c) = out[static_cast<size_t>(r)];
        }
    }
    Eigen::MatrixXd result(h, w);
    double max_imag = 0.0;
    {
        std::vector<Cplx> in(static_cast<size_t>(w)), out(static_cast<size_t>(w));
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) in[static_cast<size_t>(c)] = freq(r, c);
            fft.inv(out, in);
            for (int c = 0; c < w; ++c) {
                result(r, c) = out[static_cast<size_t>(c)].real();
                max_imag = std::max(max_imag, std::abs(out[static_cast<size_t>(c)].imag()));
            }
        }
    }

    // The mask is symmetric in signed frequency, so conjugate symmetry is
    // preserved and the inverse must be real up to rounding.
    const double input_norm = band.norm();
    if (max_imag > 1e-6 * std::max(input_norm, 1e-300))
        throw ValidationError("fourier_highpass: non-negligible imaginary residue");
    return result;
}

}  // namespace landseg
