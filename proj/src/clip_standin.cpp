#include "landseg/model/clip_standin.hpp"

#include <cmath>

namespace landseg {

namespace {

TensorD box_blur(const TensorD& pixels, int radius) {
    if (radius <= 0) return pixels;
    const int c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    TensorD out(pixels.shape);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double sum = 0.0;
                int count = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= w) continue;
                        sum += pixels.at(ch, yy, xx);
                        ++count;
                    }
                }
                out.at(ch, y, x) = sum / count;
            }
        }
    }
    return out;
}

}  // namespace

ClipStandin ClipStandin::fit(const DatasetHandle& data, const std::string& subset_id,
                             const std::vector<int>& train_indices) {
    const SubsetInfo& sub = data.subset(subset_id);
    const int k = sub.taxonomy.size();
    const int c = static_cast<int>(sub.wavelengths.size());

    ClipStandin model;
    model.taxonomy_id = sub.taxonomy.taxonomy_id;
    model.class_means = Eigen::MatrixXd::Zero(k, c);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);

    for (int idx : train_indices) {
        MultispectralImage img = data.load_image(subset_id, idx);
        LabelMask lab = data.load_label(subset_id, idx);
        TensorD blurred = box_blur(img.pixels, model.blur_radius);
        const Eigen::Index hw = static_cast<Eigen::Index>(img.height()) * img.width();
        for (Eigen::Index p = 0; p < hw; ++p) {
            const int32_t y = lab.classes(p);
            if (y == lab.ignore_value || y < 0 || y >= k) continue;
            for (int b = 0; b < c; ++b) model.class_means(y, b) += blurred.data[b * hw + p];
            counts[y] += 1.0;
        }
    }
    for (int cls = 0; cls < k; ++cls)
        if (counts[cls] > 0) model.class_means.row(cls) /= counts[cls];
    return model;
}

ProbabilityStack ClipStandin::predict(const MultispectralImage& image) const {
    const int k = static_cast<int>(class_means.rows());
    const int c = static_cast<int>(class_means.cols());
    if (image.channels() != c)
        throw ValidationError("clip standin: band count does not match fitted spectra");
    TensorD blurred = box_blur(image.pixels, blur_radius);
    const Eigen::Index hw = static_cast<Eigen::Index>(image.height()) * image.width();
    TensorD probs({k, image.height(), image.width()});
    Eigen::VectorXd d2(k);
    for (Eigen::Index p = 0; p < hw; ++p) {
        for (int cls = 0; cls < k; ++cls) {
            double acc = 0.0;
            for (int b = 0; b < c; ++b) {
                const double d = blurred.data[b * hw + p] - class_means(cls, b);
                acc += d * d;
            }
            d2[cls] = acc;
        }
        const double mn = d2.minCoeff();
        double sum = 0.0;
        for (int cls = 0; cls < k; ++cls) {
            const double e = std::exp(-(d2[cls] - mn) * temperature);
            probs.data[cls * hw + p] = e;
            sum += e;
        }
        for (int cls = 0; cls < k; ++cls) probs.data[cls * hw + p] /= sum;
    }
    return ProbabilityStack::from_probs(std::move(probs), taxonomy_id);
}

}  // namespace landseg
