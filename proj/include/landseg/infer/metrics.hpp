#pragma once

#include <vector>

#include "landseg/core/types.hpp"

namespace landseg {

struct EvalResult {
    Eigen::MatrixXd confusion;        // [K,K], rows = ground truth
    Eigen::VectorXd per_class_iou;    // NaN for classes absent from gt and pred
    std::vector<int> classes_evaluated;
    double miou = 0.0;
    double oa = 0.0;
};

// Confusion matrix over non-ignore pixels; IoU_k = TP/(TP+FP+FN); mIoU is
// averaged over classes present in gt or pred; OA = trace/total. Rejects
// inputs with zero evaluable pixels.
EvalResult evaluate(const TensorI& pred, const LabelMask& gt);

}  // namespace landseg
