#pragma once

#include <cmath>
#include <map>
#include <unordered_map>
#include <vector>

#include "landseg/nn/param.hpp"

namespace landseg::nn {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled-weight-decay adaptive optimizer with per-prefix learning-rate
// scales (longest matching prefix wins). Only parameters passed to step()
// are touched, so moments and decay never drift for parameters that did not
// participate in a batch.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void set_lr_scale(const std::string& prefix, double scale) { scales_[prefix] = scale; }

    double lr_scale_for(const std::string& name) const {
        size_t best_len = 0;
        double best = 1.0;
        for (const auto& [prefix, scale] : scales_) {
            if (name.rfind(prefix, 0) == 0 && prefix.size() >= best_len) {
                best_len = prefix.size();
                best = scale;
            }
        }
        return best;
    }

    const std::map<std::string, double>& lr_scales() const { return scales_; }
    const AdamWConfig& config() const { return cfg_; }

    void step(double lr, const std::vector<Parameter*>& params) {
        for (Parameter* p : params) {
            if (!p->trainable) continue;
            const double s = lr_scale_for(p->name);
            if (s == 0.0) continue;
            State& st = state_[p];
            if (st.m.numel() == 0) {
                st.m = TensorD(p->value.shape);
                st.v = TensorD(p->value.shape);
            }
            st.t += 1;
            const auto& g = p->grad.data;
            st.m.data = cfg_.beta1 * st.m.data + (1.0 - cfg_.beta1) * g;
            st.v.data = cfg_.beta2 * st.v.data + (1.0 - cfg_.beta2) * g.square();
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.t));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.t));
            const double step_lr = lr * s;
            p->value.data -= step_lr * ((st.m.data / bc1) / ((st.v.data / bc2).sqrt() + cfg_.eps) +
                                        cfg_.weight_decay * p->value.data);
        }
    }

private:
    struct State {
        TensorD m, v;
        long t = 0;
    };

    AdamWConfig cfg_;
    std::map<std::string, double> scales_;
    std::unordered_map<Parameter*, State> state_;
};

// Cosine decay from lr_init to lr_final over total_steps optimizer steps.
inline double cosine_lr(long step, long total_steps, double lr_init, double lr_final) {
    if (total_steps <= 1) return lr_final;
    const double t = static_cast<double>(std::min(step, total_steps - 1)) /
                     static_cast<double>(total_steps - 1);
    return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(M_PI * t));
}

}  // namespace landseg::nn
