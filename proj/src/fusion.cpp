#include "landseg/infer/fusion.hpp"

#include <cmath>
#include <fstream>

#include "landseg/ad/ops.hpp"
#include "landseg/core/render.hpp"

namespace landseg {

FusionResult fuse(const ProbabilityStack& land, const ProbabilityStack& clip,
                  const FusionConfig& cfg) {
    cfg.validate();
    if (land.probs.shape != clip.probs.shape)
        throw ValidationError("fuse: probability stacks must share K, H, W");

    const int k = land.num_classes();
    const Eigen::Index hw = land.probs.numel() / k;
    FusionResult out;
    out.unnormalized = TensorD(land.probs.shape);
    for (int c = 0; c < k; ++c) {
        const bool low_conf =
            land.class_confidences[c] <= cfg.c_t && clip.class_confidences[c] > cfg.c_t;
        const double wl = low_conf ? cfg.w_low_land : cfg.w_balanced;
        const double wc = low_conf ? cfg.w_low_clip : cfg.w_balanced;
        out.unnormalized.data.segment(c * hw, hw) =
            wl * land.probs.data.segment(c * hw, hw) + wc * clip.probs.data.segment(c * hw, hw);
    }

    // Label map from the unnormalized fused maps; renormalization is cosmetic.
    out.labels = TensorI({land.height(), land.width()});
    TensorD normed(land.probs.shape);
    for (Eigen::Index p = 0; p < hw; ++p) {
        int best = 0;
        double bv = out.unnormalized.data[p];
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            const double v = out.unnormalized.data[c * hw + p];
            sum += v;
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out.labels(p) = best;
        for (int c = 0; c < k; ++c) normed.data[c * hw + p] = out.unnormalized.data[c * hw + p] / sum;
    }
    out.normalized = ProbabilityStack::from_probs(std::move(normed), land.taxonomy_id);
    return out;
}

ProbabilityStack proxy_refine(const TensorD& vfm_features, const ProbabilityStack& clip) {
    if (vfm_features.rank() != 3) throw ValidationError("proxy_refine: features must be [D,h,w]");
    const int d = vfm_features.dim(0), h = vfm_features.dim(1), w = vfm_features.dim(2);
    const int k = clip.num_classes();
    if (h < 1 || w < 1) throw ValidationError("proxy_refine: empty feature grid");

    // Reuse the tape ops on constants for resampling and the attention math.
    ad::Graph g;
    ad::Var feats = g.constant(vfm_features);
    ad::Var values_grid = g.constant(clip.probs);
    values_grid = ad::bilinear_resize(g, values_grid, h, w);

    ad::Var q = ad::transpose2d(g, ad::reshape(g, feats, {d, h * w}));       // [N,D]
    ad::Var v = ad::transpose2d(g, ad::reshape(g, values_grid, {k, h * w}));  // [N,K]
    ad::Var scores =
        ad::scale(g, ad::matmul(g, q, ad::transpose2d(g, q)), 1.0 / std::sqrt(double(d)));
    ad::Var attn = ad::softmax_rows(g, scores);
    ad::Var refined = ad::matmul(g, attn, v);  // [N,K]
    ad::Var grid = ad::reshape(g, ad::transpose2d(g, refined), {k, h, w});
    ad::Var full = ad::bilinear_resize(g, grid, clip.height(), clip.width());

    // Rows of the attention are simplices, so outputs stay near-simplex;
    // clamp and renormalize to wash out interpolation rounding.
    TensorD probs = g.val(full);
    const Eigen::Index hw = probs.numel() / k;
    for (Eigen::Index p = 0; p < hw; ++p) {
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            double& x = probs.data[c * hw + p];
            if (x < 0.0) x = 0.0;
            sum += x;
        }
        if (sum <= 0.0) {
            for (int c = 0; c < k; ++c) probs.data[c * hw + p] = 1.0 / k;
        } else {
            for (int c = 0; c < k; ++c) probs.data[c * hw + p] /= sum;
        }
    }
    return ProbabilityStack::from_probs(std::move(probs), clip.taxonomy_id);
}

std::vector<SweepRow> threshold_sweep(const ProbabilityStack& land, const ProbabilityStack& clip,
                                      const LabelMask& gt,
                                      const std::vector<double>& thresholds) {
    std::vector<SweepRow> rows;
    for (double t : thresholds) {
        FusionConfig cfg;
        cfg.c_t = t;
        FusionResult fused = fuse(land, clip, cfg);
        EvalResult r = evaluate(fused.labels, gt);
        SweepRow row;
        row.c_t = t;
        row.miou = r.miou;
        row.oa = r.oa;
        row.per_class_iou = r.per_class_iou;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write sweep csv: " + path.string());
    out << "C_t,mIoU,OA";
    if (!rows.empty())
        for (Eigen::Index c = 0; c < rows.front().per_class_iou.size(); ++c)
            out << ",IoU_" << c;
    out << "\n";
    out.precision(10);
    for (const auto& r : rows) {
        out << r.c_t << "," << r.miou << "," << r.oa;
        for (Eigen::Index c = 0; c < r.per_class_iou.size(); ++c) out << "," << r.per_class_iou[c];
        out << "\n";
    }
}

}  // namespace landseg
