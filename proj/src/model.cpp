#include "landseg/model/model.hpp"

#include <cstring>
#include <fstream>

namespace landseg {

using ad::Var;

void ModelConfig::finalize() {
    decoder.dim = backbone.widths[2];
    decoder.skip1_width = backbone.widths[1];
    decoder.skip2_width = backbone.widths[0];
    decoder.text_dim = text.embed_dim;
    // Two transpose convolutions must undo the block-3 stride.
    const int stride3 = backbone.downsample[2];
    int s1 = 1;
    for (int cand : {4, 3, 2}) {
        if (stride3 % cand == 0 && stride3 / cand >= 1) {
            s1 = cand;
            break;
        }
    }
    decoder.up_strides = {s1, stride3 / s1};
    spectral.validate();
    backbone.validate();
    decoder.validate();
    if (backbone.downsample[2] != decoder.up_strides[0] * decoder.up_strides[1])
        throw ValidationError("model: decoder upsampling does not undo the block-3 stride");
}

Config ModelConfig::to_config() const {
    Config c;
    c.set_int("model.seed", static_cast<long>(seed));
    c.set_bool("model.aux_decoder", aux_decoder);
    c.set_bool("model.afm_enabled", afm_enabled);
    c.set_double("hf.mask_ratio", hf.mask_ratio);
    c.set_int("model.spectral.depth", spectral.depth);
    c.set_int("model.spectral.embed_dim", spectral.embed_dim);
    c.set_int("model.spectral.patch", spectral.patch);
    c.set_int("model.spectral.heads", spectral.heads);
    c.set_int("model.spectral.mlp_hidden", spectral.mlp_hidden);
    c.set_int("model.spectral.wave_feats", spectral.wave_feats);
    c.set_int("model.spectral.hyper_hidden", spectral.hyper_hidden);
    c.set_bool("model.spectral.pos_enc", spectral.pos_enc);
    c.set_int("model.backbone.layers_per_block", backbone.layers_per_block);
    c.set_int("model.backbone.width0", backbone.widths[0]);
    c.set_int("model.backbone.stride0", backbone.downsample[0]);
    c.set_int("model.backbone.in_channels", backbone.in_channels);
    c.set_bool("model.backbone.frozen", backbone.frozen);
    c.set_int("model.decoder.heads", decoder.heads);
    c.set_int("model.decoder.ffn_hidden", decoder.ffn_hidden);
    c.set_int("model.decoder.out_feat", decoder.out_feat);
    c.set_int("model.text.embed_dim", text.embed_dim);
    c.set_int("model.text.layers", text.layers);
    c.set_int("model.text.heads", text.heads);
    c.set_int("model.text.mlp_hidden", text.mlp_hidden);
    c.set_int("model.text.seed", static_cast<long>(text.seed));
    return c;
}

ModelConfig ModelConfig::from_config(const Config& c) {
    ModelConfig m;
    m.seed = static_cast<uint64_t>(c.get_int("model.seed", 0));
    m.aux_decoder = c.get_bool("model.aux_decoder", true);
    m.afm_enabled = c.get_bool("model.afm_enabled", true);
    m.hf.mask_ratio = c.get_double("hf.mask_ratio", 0.25);
    m.spectral.depth = static_cast<int>(c.get_int("model.spectral.depth", 12));
    m.spectral.embed_dim = static_cast<int>(c.get_int("model.spectral.embed_dim", 64));
    m.spectral.patch = static_cast<int>(c.get_int("model.spectral.patch", 8));
    m.spectral.heads = static_cast<int>(c.get_int("model.spectral.heads", 4));
    m.spectral.mlp_hidden = static_cast<int>(c.get_int("model.spectral.mlp_hidden", 128));
    m.spectral.wave_feats = static_cast<int>(c.get_int("model.spectral.wave_feats", 32));
    m.spectral.hyper_hidden = static_cast<int>(c.get_int("model.spectral.hyper_hidden", 64));
    m.spectral.pos_enc = c.get_bool("model.spectral.pos_enc", true);
    m.backbone.layers_per_block =
        static_cast<int>(c.get_int("model.backbone.layers_per_block", 2));
    const int w0 = static_cast<int>(c.get_int("model.backbone.width0", 32));
    const int s0 = static_cast<int>(c.get_int("model.backbone.stride0", 4));
    m.backbone.widths = {w0, 2 * w0, 4 * w0, 8 * w0};
    m.backbone.downsample = {s0, 2 * s0, 4 * s0, 8 * s0};
    m.backbone.in_channels = static_cast<int>(c.get_int("model.backbone.in_channels", 3));
    m.backbone.frozen = c.get_bool("model.backbone.frozen", true);
    m.decoder.heads = static_cast<int>(c.get_int("model.decoder.heads", 4));
    m.decoder.ffn_hidden = static_cast<int>(c.get_int("model.decoder.ffn_hidden", 256));
    m.decoder.out_feat = static_cast<int>(c.get_int("model.decoder.out_feat", 32));
    m.text.embed_dim = static_cast<int>(c.get_int("model.text.embed_dim", 96));
    m.text.layers = static_cast<int>(c.get_int("model.text.layers", 2));
    m.text.heads = static_cast<int>(c.get_int("model.text.heads", 4));
    m.text.mlp_hidden = static_cast<int>(c.get_int("model.text.mlp_hidden", 192));
    m.text.seed = static_cast<uint64_t>(c.get_int("model.text.seed", 0x7e57));
    m.finalize();
    return m;
}

LandSegmenter::LandSegmenter(ModelConfig cfg) : cfg_(cfg) {
    cfg_.finalize();
    text_ = std::make_unique<TextEncoder>(cfg_.text);
    spectral_ = std::make_unique<SpectralEmbedder>(cfg_.spectral, cfg_.seed);
    EncoderConfig ec;
    ec.backbone = cfg_.backbone;
    ec.spectral_dim = cfg_.spectral.embed_dim;
    ec.afm_enabled = cfg_.afm_enabled;
    encoder_ = std::make_unique<FusionEncoder>(ec, cfg_.seed);
    decoder_ = std::make_unique<SegDecoder>(cfg_.decoder, "decoder.", cfg_.seed);
    if (cfg_.aux_decoder)
        aux_decoder_ = std::make_unique<SegDecoder>(cfg_.decoder, "decoder_aux.", cfg_.seed + 1);
}

MultispectralImage LandSegmenter::normalize(const MultispectralImage& image,
                                            const Eigen::VectorXd& mean,
                                            const Eigen::VectorXd& stddev) {
    if (mean.size() != image.channels() || stddev.size() != image.channels())
        throw ValidationError("normalize: band stats do not match channel count");
    MultispectralImage out = image;
    const Eigen::Index hw = static_cast<Eigen::Index>(image.height()) * image.width();
    for (int c = 0; c < image.channels(); ++c) {
        const double s = stddev[c] > 1e-12 ? stddev[c] : 1.0;
        out.pixels.data.segment(c * hw, hw) =
            (image.pixels.data.segment(c * hw, hw) - mean[c]) / s;
    }
    return out;
}

MultispectralImage LandSegmenter::normalize_per_image(const MultispectralImage& image) {
    const Eigen::Index hw = static_cast<Eigen::Index>(image.height()) * image.width();
    Eigen::VectorXd mean(image.channels()), stddev(image.channels());
    for (int c = 0; c < image.channels(); ++c) {
        const auto seg = image.pixels.data.segment(c * hw, hw);
        mean[c] = seg.mean();
        stddev[c] = std::sqrt(std::max((seg - mean[c]).square().mean(), 0.0));
    }
    return normalize(image, mean, stddev);
}

Var LandSegmenter::logits(nn::Binder& b, const MultispectralImage& normalized,
                          const std::vector<Eigen::VectorXd>& prompts, bool use_aux) {
    normalized.validate();
    const auto rgb_idx = resolve_rgb_bands(normalized.wavelengths);
    const int h = normalized.height(), w = normalized.width();
    TensorD rgb({cfg_.backbone.in_channels, h, w});
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (int i = 0; i < cfg_.backbone.in_channels; ++i) {
        const int src = rgb_idx[static_cast<size_t>(i % 3)];
        rgb.data.segment(i * hw, hw) = normalized.pixels.data.segment(src * hw, hw);
    }
    TensorD hf = hf_stack(normalized, cfg_.hf.mask_ratio);
    auto spe = spectral_->features(b, normalized.pixels, normalized.wavelengths);
    EncoderFeaturesVars feats = encoder_->forward(b, rgb, hf, spe);
    SegDecoder* dec = use_aux ? aux_decoder_.get() : decoder_.get();
    if (!dec) throw ValidationError("model: auxiliary decoder is disabled");
    return dec->decode(b, feats, prompts);
}

ProbabilityStack LandSegmenter::infer(const MultispectralImage& normalized,
                                      const std::vector<Eigen::VectorXd>& prompts,
                                      const std::string& taxonomy_id) {
    ad::Graph g;
    nn::Binder b(g);
    Var z = logits(b, normalized, prompts, false);
    return predict_probs(g.val(z), taxonomy_id);
}

EncoderFeatures LandSegmenter::encode_values(const MultispectralImage& normalized) {
    ad::Graph g;
    nn::Binder b(g);
    const auto rgb_idx = resolve_rgb_bands(normalized.wavelengths);
    const int h = normalized.height(), w = normalized.width();
    TensorD rgb({cfg_.backbone.in_channels, h, w});
    const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
    for (int i = 0; i < cfg_.backbone.in_channels; ++i)
        rgb.data.segment(i * hw, hw) =
            normalized.pixels.data.segment(rgb_idx[static_cast<size_t>(i % 3)] * hw, hw);
    TensorD hf = hf_stack(normalized, cfg_.hf.mask_ratio);
    auto spe = spectral_->features(b, normalized.pixels, normalized.wavelengths);
    EncoderFeaturesVars vars = encoder_->forward(b, rgb, hf, spe);
    EncoderFeatures out;
    for (int i = 0; i < 4; ++i) out.per_block[static_cast<size_t>(i)] = g.val(vars.per_block[static_cast<size_t>(i)]);
    out.decoder_embedding = g.val(vars.decoder_embedding);
    return out;
}

std::vector<nn::Parameter*> LandSegmenter::all_params() {
    std::vector<nn::Parameter*> out;
    for (auto* p : text_->param_set().all()) out.push_back(p);
    for (auto* p : spectral_->params().all()) out.push_back(p);
    for (auto* p : encoder_->backbone_params().all()) out.push_back(p);
    for (auto* p : encoder_->afm_params().all()) out.push_back(p);
    for (auto* p : decoder_->params().all()) out.push_back(p);
    if (aux_decoder_)
        for (auto* p : aux_decoder_->params().all()) out.push_back(p);
    return out;
}

std::vector<nn::Parameter*> LandSegmenter::trainable_params() {
    std::vector<nn::Parameter*> out;
    for (auto* p : all_params())
        if (p->trainable) out.push_back(p);
    return out;
}

std::vector<const nn::Parameter*> LandSegmenter::group(const std::string& prefix) const {
    std::vector<const nn::Parameter*> out;
    auto* self = const_cast<LandSegmenter*>(this);
    for (auto* p : self->all_params())
        if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
    return out;
}

namespace {

void put_str(std::ostream& out, const std::string& s) {
    uint32_t n = static_cast<uint32_t>(s.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(s.data(), n);
}

std::string get_str(std::istream& in) {
    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    if (!in) throw IoError("checkpoint: truncated");
    std::string s(n, '\0');
    if (n) in.read(s.data(), n);
    return s;
}

void put_vec(std::ostream& out, const Eigen::VectorXd& v) {
    uint32_t n = static_cast<uint32_t>(v.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * 8));
}

Eigen::VectorXd get_vec(std::istream& in) {
    uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 4);
    Eigen::VectorXd v(n);
    if (n) in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
    if (!in) throw IoError("checkpoint: truncated");
    return v;
}

}  // namespace

void LandSegmenter::save_checkpoint(const std::filesystem::path& path, const Config& extra_echo,
                                    long step) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write("LSCK", 4);
    uint16_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 2);
    int64_t step64 = step;
    out.write(reinterpret_cast<const char*>(&step64), 8);

    Config echo = cfg_.to_config();
    echo.merge(extra_echo);
    put_str(out, echo.serialize());

    uint32_t nstats = static_cast<uint32_t>(band_stats_.size());
    out.write(reinterpret_cast<const char*>(&nstats), 4);
    for (const auto& [id, st] : band_stats_) {
        put_str(out, id);
        put_vec(out, st.mean);
        put_vec(out, st.stddev);
    }

    auto* self = const_cast<LandSegmenter*>(this);
    auto params = self->all_params();
    uint32_t nparams = static_cast<uint32_t>(params.size());
    out.write(reinterpret_cast<const char*>(&nparams), 4);
    for (const auto* p : params) {
        put_str(out, p->name);
        uint32_t ndim = static_cast<uint32_t>(p->value.shape.size());
        out.write(reinterpret_cast<const char*>(&ndim), 4);
        for (int d : p->value.shape) {
            uint64_t dd = static_cast<uint64_t>(d);
            out.write(reinterpret_cast<const char*>(&dd), 8);
        }
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.numel() * 8));
    }
}

LandSegmenter::Loaded LandSegmenter::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "LSCK", 4) != 0)
        throw IoError("not a checkpoint file: " + path.string());
    uint16_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 2);
    if (version != 1) throw IoError("unsupported checkpoint version");
    int64_t step = 0;
    in.read(reinterpret_cast<char*>(&step), 8);

    Config echo = Config::parse_string(get_str(in), path.string() + "#echo");
    Loaded loaded;
    loaded.echo = echo;
    loaded.step = static_cast<long>(step);
    loaded.model = std::make_unique<LandSegmenter>(ModelConfig::from_config(echo));

    uint32_t nstats = 0;
    in.read(reinterpret_cast<char*>(&nstats), 4);
    for (uint32_t i = 0; i < nstats; ++i) {
        std::string id = get_str(in);
        BandStats st;
        st.mean = get_vec(in);
        st.stddev = get_vec(in);
        loaded.model->band_stats()[id] = st;
    }

    std::map<std::string, nn::Parameter*> by_name;
    for (auto* p : loaded.model->all_params()) by_name[p->name] = p;
    uint32_t nparams = 0;
    in.read(reinterpret_cast<char*>(&nparams), 4);
    for (uint32_t i = 0; i < nparams; ++i) {
        std::string name = get_str(in);
        uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        std::vector<int> shape;
        Eigen::Index numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint64_t dd = 0;
            in.read(reinterpret_cast<char*>(&dd), 8);
            shape.push_back(static_cast<int>(dd));
            numel *= static_cast<Eigen::Index>(dd);
        }
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IoError("checkpoint parameter does not exist in model: " + name);
        if (it->second->value.shape != shape)
            throw IoError("checkpoint parameter shape mismatch: " + name);
        in.read(reinterpret_cast<char*>(it->second->value.data.data()),
                static_cast<std::streamsize>(numel * 8));
        if (!in) throw IoError("checkpoint: truncated parameter data");
    }
    return loaded;
}

}  // namespace landseg
