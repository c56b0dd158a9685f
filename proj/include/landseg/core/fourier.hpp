#pragma once

#include <Eigen/Dense>

namespace landseg {

// 2-D DFT high-pass: forward transform, zero a centered rectangle of the
// shifted spectrum (signed-frequency indices |f_r| <= floor(tau*H/2),
// |f_c| <= floor(tau*W/2)), inverse transform, real part. tau == 0 is the
// identity. Throws if tau is outside [0,1), if H or W < 2, or if the
// imaginary residue of the inverse exceeds 1e-6 * ||x||.
Eigen::MatrixXd fourier_highpass(const Eigen::MatrixXd& band, double mask_ratio);

}  // namespace landseg
