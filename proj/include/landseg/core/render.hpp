#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "landseg/core/types.hpp"

namespace landseg {

// Minimal raster output: 24-bit uncompressed BMP. Good enough for loss
// curves, sweep plots, confusion heatmaps, and colorized label maps without
// pulling in an image library.
struct Raster {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel, top-down

    Raster(int w, int h, std::array<uint8_t, 3> fill = {255, 255, 255});
    void set(int x, int y, std::array<uint8_t, 3> c);
    void line(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> c);
    void save_bmp(const std::filesystem::path& path) const;
};

// Deterministic palette for class ids without declared colors.
std::array<uint8_t, 3> default_class_color(int class_id);

// One polyline per series over a light grid; x spans [0, n-1], y spans the
// data range.
void render_line_chart(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& series, int width = 640,
                       int height = 400);

void render_heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values,
                    int cell = 24);

void render_label_map(const std::filesystem::path& path, const TensorI& labels,
                      const ClassTaxonomy& taxonomy, int32_t ignore_value = 255);

}  // namespace landseg
