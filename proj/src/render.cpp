#include "landseg/core/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "landseg/core/errors.hpp"

namespace landseg {

Raster::Raster(int w, int h, std::array<uint8_t, 3> fill) : width(w), height(h) {
    rgb.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < rgb.size(); i += 3) {
        rgb[i] = fill[0];
        rgb[i + 1] = fill[1];
        rgb[i + 2] = fill[2];
    }
}

void Raster::set(int x, int y, std::array<uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
}

void Raster::line(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Raster::save_bmp(const std::filesystem::path& path) const {
    const int row_bytes = width * 3;
    const int pad = (4 - row_bytes % 4) % 4;
    const uint32_t data_size = static_cast<uint32_t>((row_bytes + pad) * height);
    const uint32_t file_size = 54 + data_size;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path.string());
    auto put16 = [&](uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("BM", 2);
    put32(file_size);
    put32(0);
    put32(54);
    put32(40);
    put32(static_cast<uint32_t>(width));
    put32(static_cast<uint32_t>(height));
    put16(1);
    put16(24);
    put32(0);
    put32(data_size);
    put32(2835);
    put32(2835);
    put32(0);
    put32(0);
    const char zeros[3] = {0, 0, 0};
    for (int y = height - 1; y >= 0; --y) {  // BMP stores bottom-up
        for (int x = 0; x < width; ++x) {
            size_t i = (static_cast<size_t>(y) * width + x) * 3;
            char bgr[3] = {static_cast<char>(rgb[i + 2]), static_cast<char>(rgb[i + 1]),
                           static_cast<char>(rgb[i])};
            out.write(bgr, 3);
        }
        out.write(zeros, pad);
    }
}

std::array<uint8_t, 3> default_class_color(int class_id) {
    // Golden-angle hue walk, fixed saturation/value.
    const double h = std::fmod(class_id * 137.50776405, 360.0);
    const double s = 0.65, v = 0.92;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) r = c, g = x;
    else if (h < 120) r = x, g = c;
    else if (h < 180) g = c, b = x;
    else if (h < 240) g = x, b = c;
    else if (h < 300) r = x, b = c;
    else r = c, b = x;
    return {static_cast<uint8_t>((r + m) * 255), static_cast<uint8_t>((g + m) * 255),
            static_cast<uint8_t>((b + m) * 255)};
}

void render_line_chart(const std::filesystem::path& path,
                       const std::vector<std::vector<double>>& series, int width, int height) {
    Raster img(width, height);
    const int margin = 24;
    for (int i = 0; i <= 4; ++i) {
        int y = margin + i * (height - 2 * margin) / 4;
        img.line(margin, y, width - margin, y, {225, 225, 225});
    }
    double lo = 0.0, hi = 1.0;
    bool first = true;
    size_t n = 0;
    for (const auto& s : series)
        for (double v : s) {
            if (!std::isfinite(v)) continue;
            if (first) {
                lo = hi = v;
                first = false;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            n = std::max(n, s.size());
        }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    for (size_t si = 0; si < series.size(); ++si) {
        auto color = default_class_color(static_cast<int>(si));
        const auto& s = series[si];
        int px = -1, py = -1;
        for (size_t i = 0; i < s.size(); ++i) {
            if (!std::isfinite(s[i])) continue;
            int x = margin + static_cast<int>(static_cast<double>(i) /
                                              std::max<size_t>(n - 1, 1) * (width - 2 * margin));
            int y = height - margin -
                    static_cast<int>((s[i] - lo) / (hi - lo) * (height - 2 * margin));
            if (px >= 0) img.line(px, py, x, y, color);
            px = x;
            py = y;
        }
    }
    img.line(margin, margin, margin, height - margin, {80, 80, 80});
    img.line(margin, height - margin, width - margin, height - margin, {80, 80, 80});
    img.save_bmp(path);
}

void render_heatmap(const std::filesystem::path& path, const Eigen::MatrixXd& values, int cell) {
    const int rows = static_cast<int>(values.rows());
    const int cols = static_cast<int>(values.cols());
    Raster img(cols * cell, rows * cell);
    const double hi = std::max(values.maxCoeff(), 1e-12);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double t = std::clamp(values(r, c) / hi, 0.0, 1.0);
            // white -> blue -> red ramp
            std::array<uint8_t, 3> color;
            if (t < 0.5) {
                const double u = t * 2.0;
                color = {static_cast<uint8_t>(255 - 155 * u), static_cast<uint8_t>(255 - 155 * u),
                         255};
            } else {
                const double u = (t - 0.5) * 2.0;
                color = {static_cast<uint8_t>(100 + 155 * u), static_cast<uint8_t>(100 - 60 * u),
                         static_cast<uint8_t>(255 - 215 * u)};
            }
            for (int dy = 0; dy < cell; ++dy)
                for (int dx = 0; dx < cell; ++dx) img.set(c * cell + dx, r * cell + dy, color);
        }
    }
    img.save_bmp(path);
}

void render_label_map(const std::filesystem::path& path, const TensorI& labels,
                      const ClassTaxonomy& taxonomy, int32_t ignore_value) {
    const int h = labels.dim(0), w = labels.dim(1);
    Raster img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int32_t v = labels.at(y, x);
            std::array<uint8_t, 3> color{255, 255, 255};
            if (v != ignore_value && v >= 0 && v < taxonomy.size()) {
                const auto& info = taxonomy.classes[static_cast<size_t>(v)];
                color = info.color ? *info.color : default_class_color(v);
            }
            img.set(x, y, color);
        }
    }
    img.save_bmp(path);
}

}  // namespace landseg
