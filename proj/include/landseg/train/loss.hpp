#pragma once

#include "landseg/ad/ops.hpp"
#include "landseg/core/types.hpp"
#include "landseg/nn/param.hpp"

namespace landseg {

struct LossConfig {
    bool ce = true;
    bool dice = true;
    bool bce = true;
    bool bdice = true;
    double eps = 1.0;  // dice smoothing in numerator and denominator

    void validate() const {
        if (!(eps > 0.0)) throw ValidationError("loss: dice smoothing must be positive");
    }
};

struct LossVars {
    ad::Var total;
    ad::Var ce;
    ad::Var dice;
    ad::Var bce;
    ad::Var bdice;
};

struct LossValues {
    double total = 0, ce = 0, dice = 0, bce = 0, bdice = 0;
};

// Multiclass CE + multiclass Dice over the softmax stack, plus per-class BCE
// and binary Dice on each pre-softmax class map through a logistic, summed
// over classes. Ignored pixels are excluded from every term.
LossVars combined_loss(nn::Binder& b, ad::Var logits, const LabelMask& target,
                       const LossConfig& cfg);

LossValues loss_values(const ad::Graph& g, const LossVars& v);

}  // namespace landseg
