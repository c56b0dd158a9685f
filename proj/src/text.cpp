#include "landseg/model/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace landseg {

namespace {

std::vector<std::string> tokenize(const std::string& name) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : name) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += c;
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

Eigen::MatrixXd softmax_rows_plain(Eigen::MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        m.row(i) = (m.row(i).array() - mx).exp();
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

}  // namespace

TextEncoder::TextEncoder(TextEncoderConfig cfg) : cfg_(cfg) {
    Rng rng(mix_seed(cfg_.seed, "text_encoder"));
    const int d = cfg_.embed_dim;
    const double s_attn = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "text.layer" + std::to_string(l) + ".";
        params_.add(p + "wq", nn::normal_init({d, d}, s_attn, rng), false);
        params_.add(p + "wk", nn::normal_init({d, d}, s_attn, rng), false);
        params_.add(p + "wv", nn::normal_init({d, d}, s_attn, rng), false);
        params_.add(p + "wo", nn::normal_init({d, d}, s_attn, rng), false);
        params_.add(p + "w1", nn::xavier_init({d, cfg_.mlp_hidden}, d, cfg_.mlp_hidden, rng),
                    false);
        params_.add(p + "b1", TensorD({cfg_.mlp_hidden}), false);
        params_.add(p + "w2", nn::xavier_init({cfg_.mlp_hidden, d}, cfg_.mlp_hidden, d, rng),
                    false);
        params_.add(p + "b2", TensorD({d}), false);
    }
    params_.add("text.out_proj", nn::normal_init({d, d}, s_attn, rng), false);
}

Eigen::VectorXd TextEncoder::token_embedding(const std::string& token) const {
    Rng rng(mix_seed(cfg_.seed, "token/" + token));
    Eigen::VectorXd v(cfg_.embed_dim);
    for (int i = 0; i < cfg_.embed_dim; ++i) v[i] = rng.normal();
    return v / std::sqrt(static_cast<double>(cfg_.embed_dim));
}

Eigen::VectorXd TextEncoder::embed(const std::string& name) const {
    auto tokens = tokenize(name);
    if (tokens.empty()) throw ValidationError("text encoder: empty class name");
    if (static_cast<int>(tokens.size()) > cfg_.max_tokens)
        tokens.resize(static_cast<size_t>(cfg_.max_tokens));

    const int n = static_cast<int>(tokens.size());
    const int d = cfg_.embed_dim;
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd t = token_embedding(tokens[static_cast<size_t>(i)]);
        // fixed sinusoidal position encoding
        for (int j = 0; j < d; ++j) {
            const double freq = std::pow(10000.0, -static_cast<double>(j / 2 * 2) / d);
            t[j] += 0.1 * ((j % 2 == 0) ? std::sin(i * freq) : std::cos(i * freq));
        }
        x.row(i) = t.transpose();
    }

    auto matp = [&](const std::string& key) {
        const nn::Parameter& p = params_.at(key);
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>(p.value.data.data(),
                                                                p.value.dim(0), p.value.dim(1));
    };
    auto vecp = [&](const std::string& key) {
        const nn::Parameter& p = params_.at(key);
        return Eigen::Map<const Eigen::VectorXd>(p.value.data.data(), p.value.numel());
    };

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "text.layer" + std::to_string(l) + ".";
        Eigen::MatrixXd q = x * matp(p + "wq");
        Eigen::MatrixXd k = x * matp(p + "wk");
        Eigen::MatrixXd v = x * matp(p + "wv");
        Eigen::MatrixXd attn =
            softmax_rows_plain(q * k.transpose() / std::sqrt(static_cast<double>(d)));
        x += (attn * v) * matp(p + "wo");
        Eigen::MatrixXd h = (x * matp(p + "w1")).rowwise() + vecp(p + "b1").transpose();
        h = h.array().max(0.0);  // relu
        x += (h * matp(p + "w2")).rowwise() + vecp(p + "b2").transpose();
    }
    Eigen::VectorXd pooled = x.colwise().mean().transpose();
    Eigen::VectorXd out = matp("text.out_proj").transpose() * pooled;
    const double norm = out.norm();
    return norm > 0 ? Eigen::VectorXd(out / norm) : out;
}

PromptSet embed_names(const TextEncoder& encoder, const ClassTaxonomy& taxonomy) {
    taxonomy.validate();
    PromptSet set;
    set.taxonomy_id = taxonomy.taxonomy_id;
    for (const auto& cls : taxonomy.classes) {
        std::vector<Eigen::VectorXd> variants;
        variants.reserve(cls.names.size());
        for (const auto& name : cls.names) variants.push_back(encoder.embed(name));
        set.class_variants.push_back(std::move(variants));
    }
    return set;
}

std::vector<Eigen::VectorXd> sample_prompts(const PromptSet& prompts, PromptMode mode, Rng* rng) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(prompts.class_variants.size());
    for (const auto& variants : prompts.class_variants) {
        if (mode == PromptMode::infer || variants.size() == 1 || rng == nullptr) {
            out.push_back(variants.front());
        } else {
            out.push_back(variants[static_cast<size_t>(
                rng->uniform_int(static_cast<int>(variants.size())))]);
        }
    }
    return out;
}

double silhouette_score(const Eigen::MatrixXd& points, const Eigen::VectorXi& labels,
                        SilhouetteReduction reduction, uint64_t seed) {
    const Eigen::Index n = points.rows();
    if (labels.size() != n) throw ValidationError("silhouette: label count mismatch");
    std::set<int> classes(labels.data(), labels.data() + labels.size());
    if (classes.size() < 2)
        throw ValidationError("silhouette: need at least 2 classes");

    Eigen::MatrixXd pts = points;
    if (reduction == SilhouetteReduction::tsne) pts = tsne_reduce(points, 2, 12.0, 400, seed);

    Eigen::MatrixXd dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = (pts.row(i) - pts.row(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int ci = labels[i];
        double intra_sum = 0.0;
        long intra_count = 0;
        std::map<int, std::pair<double, long>> others;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            if (labels[j] == ci) {
                intra_sum += dist(i, j);
                ++intra_count;
            } else {
                auto& acc = others[labels[j]];
                acc.first += dist(i, j);
                acc.second += 1;
            }
        }
        if (intra_count == 0) continue;  // singleton cluster contributes 0
        const double a = intra_sum / static_cast<double>(intra_count);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [cls, acc] : others)
            b = std::min(b, acc.first / static_cast<double>(acc.second));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;  // identical points: s = 0
    }
    return total / static_cast<double>(n);
}

Eigen::MatrixXd tsne_reduce(const Eigen::MatrixXd& points, int out_dim, double perplexity,
                            int iters, uint64_t seed) {
    const Eigen::Index n = points.rows();
    if (n < 3) throw ValidationError("tsne: need at least 3 points");
    perplexity = std::min(perplexity, static_cast<double>(n - 1) / 3.0);
    perplexity = std::max(perplexity, 2.0);

    // Pairwise squared distances.
    Eigen::MatrixXd d2(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d2(i, j) = (points.row(i) - points.row(j)).squaredNorm();

    // Per-point precision via binary search on entropy.
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    const double log_perp = std::log(perplexity);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 64; ++it) {
            double sum = 0.0, dsum = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = std::exp(-beta * d2(i, j));
                sum += w;
                dsum += w * d2(i, j);
            }
            if (sum <= 0) break;
            const double h = std::log(sum) + beta * dsum / sum;
            if (std::abs(h - log_perp) < 1e-5) break;
            if (h > log_perp) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) p(i, j) = std::exp(-beta * d2(i, j));
        const double rs = p.row(i).sum();
        if (rs > 0) p.row(i) /= rs;
    }
    Eigen::MatrixXd pj = (p + p.transpose()) / (2.0 * static_cast<double>(n));
    pj = pj.array().max(1e-12);

    // Deterministic init: top principal components plus a seeded jitter.
    Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd y = centered * svd.matrixV().leftCols(out_dim);
    const double ynorm = y.cwiseAbs().maxCoeff();
    if (ynorm > 0) y *= 1e-2 / ynorm;
    Rng rng(mix_seed(seed, "tsne"));
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (int j = 0; j < out_dim; ++j) y(i, j) += rng.normal(0.0, 1e-4);

    Eigen::MatrixXd vel = Eigen::MatrixXd::Zero(n, out_dim);
    const double lr = 100.0;
    const int exagg_until = std::min(100, iters / 4);
    for (int it = 0; it < iters; ++it) {
        const double exagg = it < exagg_until ? 12.0 : 1.0;
        const double momentum = it < exagg_until ? 0.5 : 0.8;
        Eigen::MatrixXd num(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double q = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
                num(i, j) = q;
                num(j, i) = q;
            }
        }
        const double qsum = std::max(num.sum(), 1e-12);
        Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, out_dim);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = num(i, j) / qsum;
                const double coeff = 4.0 * (exagg * pj(i, j) - q) * num(i, j);
                grad.row(i) += coeff * (y.row(i) - y.row(j));
            }
        vel = momentum * vel - lr * grad;
        y += vel;
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

}  // namespace landseg
