#pragma once

#include <filesystem>

#include "landseg/core/types.hpp"

namespace landseg {

// Versioned binary container shared by images, label masks, and probability
// stacks. Layout (little-endian):
//   magic "LSGC" | u16 version | u8 kind | u8 dtype
//   u32 ndim | u64 dims[ndim]
//   kind-specific metadata
//   raw payload
// Images are stored float32, labels int32, probability stacks float64.
enum class ContainerKind : uint8_t { image = 1, label = 2, probstack = 3 };

void write_image(const std::filesystem::path& path, const MultispectralImage& img);
MultispectralImage read_image(const std::filesystem::path& path);

void write_label(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_label(const std::filesystem::path& path);

void write_probstack(const std::filesystem::path& path, const ProbabilityStack& stack);
ProbabilityStack read_probstack(const std::filesystem::path& path);

ContainerKind peek_kind(const std::filesystem::path& path);

}  // namespace landseg
