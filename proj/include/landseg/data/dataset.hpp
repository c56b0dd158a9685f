#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "landseg/core/types.hpp"

namespace landseg {

struct SubsetInfo {
    std::string id;
    int patches = 0;
    int patch_size = 0;
    Eigen::VectorXd wavelengths;
    double noise_rate = 0.0;
    LabelQuality quality = LabelQuality::exact;
    double gsd = 10.0;
    ClassTaxonomy taxonomy;
    Eigen::VectorXd stat_mean;    // empty until stats are computed
    Eigen::VectorXd stat_stddev;
};

// Directory-backed dataset produced by generate_scene (or anything that
// writes the same layout + manifest).
class DatasetHandle {
public:
    static DatasetHandle open(const std::filesystem::path& root);

    const std::filesystem::path& root() const { return root_; }
    const std::vector<SubsetInfo>& subsets() const { return subsets_; }
    std::vector<SubsetInfo>& subsets() { return subsets_; }
    const SubsetInfo& subset(const std::string& id) const;

    std::filesystem::path image_path(const std::string& subset_id, int index) const;
    std::filesystem::path label_path(const std::string& subset_id, int index,
                                     bool clean = false) const;

    MultispectralImage load_image(const std::string& subset_id, int index) const;
    // clean=true reads the hidden sidecar for weak subsets; falls back to the
    // emitted labels when no sidecar exists (exact subsets).
    LabelMask load_label(const std::string& subset_id, int index, bool clean = false) const;

    void save_manifest() const;
    uint64_t seed = 0;

private:
    std::filesystem::path root_;
    std::vector<SubsetInfo> subsets_;

    friend DatasetHandle make_dataset_handle(const std::filesystem::path& root,
                                             std::vector<SubsetInfo> subsets, uint64_t seed);
};

DatasetHandle make_dataset_handle(const std::filesystem::path& root,
                                  std::vector<SubsetInfo> subsets, uint64_t seed);

}  // namespace landseg
