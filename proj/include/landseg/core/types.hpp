#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "landseg/core/tensor.hpp"

namespace landseg {

// H×W×C sample stored channel-major as [C,H,W], with per-band central
// wavelengths (micrometers) and a nominal ground sample distance.
struct MultispectralImage {
    TensorD pixels;  // [C,H,W]
    Eigen::VectorXd wavelengths;
    double gsd = 1.0;
    std::string subset_id;

    int channels() const { return pixels.dim(0); }
    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }

    void validate() const {
        if (pixels.rank() != 3) throw ValidationError("image: pixels must be [C,H,W]");
        if (wavelengths.size() != channels())
            throw ValidationError("image: wavelength count must equal channel count");
        for (Eigen::Index i = 0; i < wavelengths.size(); ++i)
            if (!(wavelengths[i] > 0.0))
                throw ValidationError("image: wavelengths must be strictly positive");
    }
};

enum class LabelQuality : uint8_t { exact = 0, weak = 1 };

struct LabelMask {
    TensorI classes;  // [H,W]
    int32_t ignore_value = 255;
    LabelQuality quality = LabelQuality::exact;
    double noise_rate = 0.0;  // recorded corruption rate for weak masks
    std::string taxonomy_id;

    int height() const { return classes.dim(0); }
    int width() const { return classes.dim(1); }

    void validate(int num_classes) const {
        if (classes.rank() != 2) throw ValidationError("label: classes must be [H,W]");
        for (Eigen::Index i = 0; i < classes.numel(); ++i) {
            const int32_t v = classes(i);
            if (v != ignore_value && (v < 0 || v >= num_classes))
                throw ValidationError("label: class id out of taxonomy range");
        }
        if (quality == LabelQuality::weak && !(noise_rate > 0.0 && noise_rate < 1.0))
            throw ValidationError("label: weak masks must record a corruption rate in (0,1)");
    }
};

struct ClassInfo {
    int id = 0;
    std::vector<std::string> names;  // names[0] is canonical
    std::optional<std::array<uint8_t, 3>> color;

    const std::string& canonical() const { return names.front(); }
};

struct ClassTaxonomy {
    std::string taxonomy_id;
    std::vector<ClassInfo> classes;

    int size() const { return static_cast<int>(classes.size()); }
    void validate() const;

    // Text format: one class per line, `class_id<TAB>variant;variant;...`
    // with an optional trailing `<TAB>#RRGGBB` color field.
    static ClassTaxonomy load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

// K×H×W per-class probability maps plus per-class max confidences
// C^k = max over pixels of probs[k].
struct ProbabilityStack {
    TensorD probs;  // [K,H,W]
    Eigen::VectorXd class_confidences;
    std::string taxonomy_id;

    int num_classes() const { return probs.dim(0); }
    int height() const { return probs.dim(1); }
    int width() const { return probs.dim(2); }

    static ProbabilityStack from_probs(TensorD probs, std::string taxonomy_id);
    void recompute_confidences();
    // Per-pixel simplex check.
    void validate(double tol = 1e-6) const;
    TensorI argmax_labels() const;
};

}  // namespace landseg
