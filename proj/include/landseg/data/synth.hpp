#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "landseg/core/config.hpp"
#include "landseg/core/rng.hpp"
#include "landseg/core/types.hpp"
#include "landseg/data/dataset.hpp"

namespace landseg {

// Per-subset generation parameters. A subset is exact iff noise_rate == 0.
struct SubsetSpec {
    std::string id;
    int patches = 12;
    int patch_size = 64;
    Eigen::VectorXd wavelengths;
    int num_classes = 4;
    double noise_rate = 0.0;
    double gsd = 10.0;
    std::vector<std::string> class_names;  // optional canonical names from the pool
};

struct SyntheticSceneSpec {
    std::vector<SubsetSpec> subsets;
    uint64_t seed = 0;
    int alignment = 32;  // patch dims must divide by this (backbone stride)

    void validate() const;
    static SyntheticSceneSpec las_default(uint64_t seed);
    static SyntheticSceneSpec parse_file(const std::filesystem::path& path);
    Config to_config() const;
};

// The shipped class-name pool: canonical name plus renaming variants; class
// spectra are derived from the canonical name so a class looks the same in
// every subset that uses it.
const std::vector<std::vector<std::string>>& class_name_pool();

// Smooth reflectance-like spectrum of a pool class at a given wavelength.
double class_spectrum(const std::string& canonical_name, double wavelength_um);

// Deterministic synthetic dataset generation. Layout:
//   <root>/<subset_id>/{images,labels}/<index>.bin
//   <root>/<subset_id>/.clean/<index>.bin     (weak subsets only)
//   <root>/<subset_id>/taxonomy.txt
//   <root>/manifest
DatasetHandle generate_scene(const SyntheticSceneSpec& spec, const std::filesystem::path& root);

// Region-structured label corruption: whole sub-regions are reassigned until
// exactly round(rate * non_ignore) pixels differ from the input. Ignored
// pixels are never touched. rate == 0 returns the input unchanged.
LabelMask corrupt_labels(const LabelMask& clean, double rate, uint64_t seed);

// Appendix-style name-text harmonization: synonym unification against the
// shipped table, then plural-to-singular per word with mixed-class
// connectors kept verbatim. Unknown names pass through.
std::vector<std::string> harmonize_names(const std::vector<std::string>& raw_names);

struct BandStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;  // population std
};

// Per-subset, per-band statistics over all pixels; rejects empty subsets.
std::map<std::string, BandStats> compute_band_stats(const DatasetHandle& dataset);

}  // namespace landseg
