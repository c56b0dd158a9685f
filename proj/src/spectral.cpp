#include "landseg/model/spectral.hpp"

#include <cmath>

namespace landseg {

using ad::Var;

SpectralEmbedder::SpectralEmbedder(SpectralConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(mix_seed(seed, "spectral"));
    const int d = cfg_.embed_dim;
    const int kernel_out = d * cfg_.patch * cfg_.patch + d;  // kernel weights + bias

    params_.add("spectral_embed.hyper.w1",
                nn::xavier_init({cfg_.wave_feats, cfg_.hyper_hidden}, cfg_.wave_feats,
                                cfg_.hyper_hidden, rng));
    params_.add("spectral_embed.hyper.b1", TensorD({cfg_.hyper_hidden}));
    params_.add("spectral_embed.hyper.w2",
                nn::xavier_init({cfg_.hyper_hidden, kernel_out}, cfg_.hyper_hidden, kernel_out,
                                rng));
    params_.add("spectral_embed.hyper.b2", TensorD({kernel_out}));

    params_.add("spectral_embed.embed_ln.gamma", TensorD::full({d}, 1.0));
    params_.add("spectral_embed.embed_ln.beta", TensorD({d}));

    const double s_attn = 1.0 / std::sqrt(static_cast<double>(d));
    for (int l = 0; l < cfg_.depth; ++l) {
        const std::string p = "spectral_embed.trunk.layer" + std::to_string(l) + ".";
        params_.add(p + "ln1.gamma", TensorD::full({d}, 1.0));
        params_.add(p + "ln1.beta", TensorD({d}));
        params_.add(p + "wq", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wk", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wv", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "wo", nn::normal_init({d, d}, s_attn, rng));
        params_.add(p + "ln2.gamma", TensorD::full({d}, 1.0));
        params_.add(p + "ln2.beta", TensorD({d}));
        params_.add(p + "mlp.w1", nn::xavier_init({d, cfg_.mlp_hidden}, d, cfg_.mlp_hidden, rng));
        params_.add(p + "mlp.b1", TensorD({cfg_.mlp_hidden}));
        params_.add(p + "mlp.w2", nn::xavier_init({cfg_.mlp_hidden, d}, cfg_.mlp_hidden, d, rng));
        params_.add(p + "mlp.b2", TensorD({d}));
    }
}

Eigen::VectorXd SpectralEmbedder::wavelength_features(double wavelength_um) const {
    if (!(wavelength_um > 0.0))
        throw ValidationError("spectral: wavelength must be strictly positive");
    // log-wavelength normalized over the 0.44..12 um range
    const double lo = std::log(0.44), hi = std::log(12.0);
    const double u = (std::log(wavelength_um) - lo) / (hi - lo);
    Eigen::VectorXd f(cfg_.wave_feats);
    for (int j = 0; j < cfg_.wave_feats / 2; ++j) {
        const double omega = M_PI * std::pow(2.0, 0.5 * j);
        f[2 * j] = std::sin(omega * u);
        f[2 * j + 1] = std::cos(omega * u);
    }
    return f;
}

std::pair<Var, Var> SpectralEmbedder::kernel_for(nn::Binder& b, double wavelength_um) {
    ad::Graph& g = b.graph();
    const int d = cfg_.embed_dim, p = cfg_.patch;
    Eigen::VectorXd feats = wavelength_features(wavelength_um);
    TensorD fin({1, cfg_.wave_feats});
    for (int i = 0; i < cfg_.wave_feats; ++i) fin.data[i] = feats[i];
    Var x = g.constant(std::move(fin));
    Var h = ad::gelu(g, ad::linear(g, x, b(params_.at("spectral_embed.hyper.w1")),
                                   b(params_.at("spectral_embed.hyper.b1"))));
    Var out = ad::linear(g, h, b(params_.at("spectral_embed.hyper.w2")),
                         b(params_.at("spectral_embed.hyper.b2")));  // [1, D*p*p + D]
    Var kflat = ad::slice_cols(g, out, 0, d * p * p);
    Var bias = ad::reshape(g, ad::slice_cols(g, out, d * p * p, d * p * p + d), {d});
    Var kernel = ad::reshape(g, kflat, {d, 1, p, p});
    return {kernel, bias};
}

std::pair<TensorD, TensorD> SpectralEmbedder::make_kernels(
    const Eigen::VectorXd& wavelengths) const {
    if (wavelengths.size() < 1) throw ValidationError("spectral: need at least one wavelength");
    const int c = static_cast<int>(wavelengths.size());
    const int d = cfg_.embed_dim, p = cfg_.patch;
    TensorD kernels({c, d, p, p});
    TensorD biases({c, d});
    ad::Graph g;
    nn::Binder b(g);
    auto* self = const_cast<SpectralEmbedder*>(this);
    for (int band = 0; band < c; ++band) {
        auto [kv, bv] = self->kernel_for(b, wavelengths[band]);
        kernels.data.segment(static_cast<Eigen::Index>(band) * d * p * p, d * p * p) =
            g.val(kv).data;
        biases.data.segment(static_cast<Eigen::Index>(band) * d, d) = g.val(bv).data;
    }
    return {kernels, biases};
}

TensorD SpectralEmbedder::positional_encoding(int th, int tw) const {
    const int d = cfg_.embed_dim;
    TensorD pe({th * tw, d});
    const int half = d / 2;
    for (int ty = 0; ty < th; ++ty) {
        for (int tx = 0; tx < tw; ++tx) {
            const Eigen::Index row = static_cast<Eigen::Index>(ty) * tw + tx;
            for (int j = 0; j < d; ++j) {
                const bool is_y = j < half;
                const int jj = is_y ? j : j - half;
                const double pos = is_y ? ty : tx;
                const double freq =
                    std::pow(10000.0, -static_cast<double>(jj / 2 * 2) / std::max(half, 1));
                pe.data[row * d + j] =
                    (jj % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
            }
        }
    }
    return pe;
}

std::array<Var, 4> SpectralEmbedder::features(nn::Binder& b, const TensorD& pixels,
                                              const Eigen::VectorXd& wavelengths) {
    ad::Graph& g = b.graph();
    if (pixels.rank() != 3) throw ValidationError("spectral: pixels must be [C,H,W]");
    const int c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
    if (static_cast<int>(wavelengths.size()) != c)
        throw ValidationError("spectral: wavelength count mismatch");
    if (h % cfg_.patch != 0 || w % cfg_.patch != 0)
        throw ValidationError("spectral: image dims must divide by patch size");
    const int th = h / cfg_.patch, tw = w / cfg_.patch;
    const int d = cfg_.embed_dim;

    // Per-band generated kernels; responses summed over bands so the band
    // count can vary freely.
    Var tokens_grid{};  // [D, th, tw]
    for (int band = 0; band < c; ++band) {
        TensorD plane({1, h, w});
        plane.data = pixels.data.segment(static_cast<Eigen::Index>(band) * h * w,
                                         static_cast<Eigen::Index>(h) * w);
        Var x = g.constant(std::move(plane));
        auto [kernel, bias] = kernel_for(b, wavelengths[band]);
        Var resp = ad::conv2d(g, x, kernel, bias, cfg_.patch, 0);
        tokens_grid = band == 0 ? resp : ad::add(g, tokens_grid, resp);
    }
    Var tokens = ad::transpose2d(g, ad::reshape(g, tokens_grid, {d, th * tw}));  // [N, D]
    tokens = ad::layer_norm(g, tokens, b(params_.at("spectral_embed.embed_ln.gamma")),
                            b(params_.at("spectral_embed.embed_ln.beta")));
    if (cfg_.pos_enc) tokens = ad::add(g, tokens, g.constant(positional_encoding(th, tw)));

    std::array<Var, 4> taps{};
    size_t tap_idx = 0;
    for (int l = 0; l < cfg_.depth; ++l) {
        const std::string p = "spectral_embed.trunk.layer" + std::to_string(l) + ".";
        nn::AttnParams attn{&params_.at(p + "wq"), &params_.at(p + "wk"), &params_.at(p + "wv"),
                            &params_.at(p + "wo")};
        Var normed = ad::layer_norm(g, tokens, b(params_.at(p + "ln1.gamma")),
                                    b(params_.at(p + "ln1.beta")));
        tokens = ad::add(g, tokens, nn::multihead_attention(b, normed, normed, attn, cfg_.heads));
        Var normed2 = ad::layer_norm(g, tokens, b(params_.at(p + "ln2.gamma")),
                                     b(params_.at(p + "ln2.beta")));
        Var hmid = ad::gelu(g, ad::linear(g, normed2, b(params_.at(p + "mlp.w1")),
                                          b(params_.at(p + "mlp.b1"))));
        tokens = ad::add(
            g, tokens, ad::linear(g, hmid, b(params_.at(p + "mlp.w2")), b(params_.at(p + "mlp.b2"))));

        if (tap_idx < taps.size() && cfg_.out_layers[tap_idx] == l) {
            taps[tap_idx] =
                ad::reshape(g, ad::transpose2d(g, tokens), {d, th, tw});
            ++tap_idx;
        }
    }
    if (tap_idx != taps.size())
        throw ValidationError("spectral: output layer indices exceed depth");
    return taps;
}

}  // namespace landseg
