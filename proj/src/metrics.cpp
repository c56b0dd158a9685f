#include "landseg/infer/metrics.hpp"

#include <cmath>

namespace landseg {

EvalResult evaluate(const TensorI& pred, const LabelMask& gt) {
    if (pred.shape != gt.classes.shape)
        throw ValidationError("evaluate: prediction/ground-truth shape mismatch");

    int32_t max_id = -1;
    for (Eigen::Index p = 0; p < pred.numel(); ++p) {
        const int32_t t = gt.classes(p);
        if (t == gt.ignore_value) continue;
        max_id = std::max({max_id, t, pred(p)});
    }
    if (max_id < 0) throw ValidationError("evaluate: no evaluable pixels");
    const int k = static_cast<int>(max_id) + 1;

    EvalResult out;
    out.confusion = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index p = 0; p < pred.numel(); ++p) {
        const int32_t t = gt.classes(p);
        if (t == gt.ignore_value) continue;
        const int32_t y = pred(p);
        if (y < 0 || y >= k) throw ValidationError("evaluate: prediction class out of range");
        out.confusion(t, y) += 1.0;
    }

    out.per_class_iou = Eigen::VectorXd::Constant(k, std::nan(""));
    double iou_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        const double tp = out.confusion(c, c);
        const double fp = out.confusion.col(c).sum() - tp;
        const double fn = out.confusion.row(c).sum() - tp;
        if (tp + fp + fn <= 0.0) continue;  // absent from both gt and pred
        const double iou = tp / (tp + fp + fn);
        out.per_class_iou[c] = iou;
        out.classes_evaluated.push_back(c);
        iou_sum += iou;
    }
    out.miou = iou_sum / static_cast<double>(out.classes_evaluated.size());
    out.oa = out.confusion.trace() / out.confusion.sum();
    return out;
}

}  // namespace landseg
