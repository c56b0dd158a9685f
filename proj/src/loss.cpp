#include "landseg/train/loss.hpp"

namespace landseg {

using ad::Var;

LossVars combined_loss(nn::Binder& b, Var logits, const LabelMask& target,
                       const LossConfig& cfg) {
    cfg.validate();
    ad::Graph& g = b.graph();
    const auto& shape = g.val(logits).shape;
    if (shape.size() != 3) throw ValidationError("combined_loss: logits must be [K,H,W]");
    if (shape[1] != target.height() || shape[2] != target.width())
        throw ValidationError("combined_loss: logits/target spatial mismatch");

    const int k = shape[0], h = shape[1], w = shape[2];
    LossVars out;
    Var zero = g.constant(TensorD::scalar(0.0));
    out.ce = zero;
    out.dice = zero;
    out.bce = zero;
    out.bdice = zero;

    if (cfg.ce)
        out.ce = ad::cross_entropy_masked(g, logits, target.classes, target.ignore_value);
    if (cfg.dice) {
        Var probs = ad::reshape(
            g, ad::softmax_cols(g, ad::reshape(g, logits, {k, h * w})), {k, h, w});
        out.dice = ad::dice_multiclass_masked(g, probs, target.classes, target.ignore_value,
                                              cfg.eps);
    }
    if (cfg.bce)
        out.bce = ad::bce_logits_masked(g, logits, target.classes, target.ignore_value);
    if (cfg.bdice) {
        Var sig = ad::sigmoid(g, logits);
        out.bdice =
            ad::binary_dice_masked(g, sig, target.classes, target.ignore_value, cfg.eps);
    }
    out.total = ad::add(g, ad::add(g, out.ce, out.dice), ad::add(g, out.bce, out.bdice));
    return out;
}

LossValues loss_values(const ad::Graph& g, const LossVars& v) {
    LossValues out;
    out.total = g.val(v.total).data[0];
    out.ce = g.val(v.ce).data[0];
    out.dice = g.val(v.dice).data[0];
    out.bce = g.val(v.bce).data[0];
    out.bdice = g.val(v.bdice).data[0];
    return out;
}

}  // namespace landseg
