#pragma once

#include "landseg/data/dataset.hpp"

namespace landseg {

// Weak CLIP-side stand-in for fusion experiments: per-class mean spectra
// fitted on labeled training pixels of a box-blurred image, scored with a
// temperature softmax over negative squared distances. Deliberately a
// different receptive field and feature space than the segmenter.
class ClipStandin {
public:
    static ClipStandin fit(const DatasetHandle& data, const std::string& subset_id,
                           const std::vector<int>& train_indices);

    ProbabilityStack predict(const MultispectralImage& image) const;

    Eigen::MatrixXd class_means;  // [K, C]
    std::string taxonomy_id;
    double temperature = 6.0;
    int blur_radius = 2;
};

}  // namespace landseg
