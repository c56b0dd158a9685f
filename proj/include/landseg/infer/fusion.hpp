#pragma once

#include <filesystem>
#include <vector>

#include "landseg/core/types.hpp"
#include "landseg/infer/metrics.hpp"

namespace landseg {

struct FusionConfig {
    double c_t = 0.6;            // confidence threshold
    double w_low_land = 1.0;     // weights when the model is unsure but CLIP is sure
    double w_low_clip = 3.0;
    double w_balanced = 2.0;     // both sides otherwise

    void validate() const {
        if (!(c_t > 0.0 && c_t < 1.0))
            throw ValidationError("fusion: threshold must be in (0,1)");
        if (!(w_low_land > 0.0 && w_low_clip > 0.0 && w_balanced > 0.0))
            throw ValidationError("fusion: weights must be positive");
    }
};

struct FusionResult {
    TensorD unnormalized;         // [K,H,W] weighted sums before renormalization
    ProbabilityStack normalized;  // per-pixel renormalized for reporting
    TensorI labels;               // argmax of the unnormalized maps
};

// Class-wise confidence-guided fusion: class k takes weights
// (w_low_land : w_low_clip) when C_land^k <= C_t and C_clip^k > C_t, and
// (w_balanced : w_balanced) otherwise.
FusionResult fuse(const ProbabilityStack& land, const ProbabilityStack& clip,
                  const FusionConfig& cfg);

// Training-free refinement: attention from the segmenter's encoder features
// (queries == keys) applied to the CLIP probability maps as values, then
// upsampled back to the stack's resolution.
ProbabilityStack proxy_refine(const TensorD& vfm_features /*[D,h,w]*/,
                              const ProbabilityStack& clip);

struct SweepRow {
    double c_t = 0.0;
    double miou = 0.0;
    double oa = 0.0;
    Eigen::VectorXd per_class_iou;
};

inline std::vector<double> default_sweep_thresholds() { return {0.4, 0.5, 0.6, 0.7, 0.8}; }

std::vector<SweepRow> threshold_sweep(const ProbabilityStack& land, const ProbabilityStack& clip,
                                      const LabelMask& gt, const std::vector<double>& thresholds);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace landseg
