#include <doctest.h>

#include "landseg/model/encoder.hpp"
#include "landseg/nn/adamw.hpp"
#include "oracles.hpp"

using namespace landseg;
using ad::Var;

namespace {

TensorD random_grid(std::vector<int> shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    TensorD t(std::move(shape));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t(i) = rng.normal(0.0, scale);
    return t;
}

// Gate parameters over a scratch set, for hand-built oracle checks.
struct ScratchGate {
    nn::ParamSet set;
    GateParams params;

    ScratchGate(int width, int hidden) {
        set.add("g.mlp.w0", TensorD({width, hidden}));
        set.add("g.mlp.b0", TensorD({hidden}));
        set.add("g.mlp.w1", TensorD({hidden, width}));
        set.add("g.mlp.b1", TensorD({width}));
        set.add("g.conv.w", TensorD({1, 2, 7, 7}));
        set.add("g.conv.b", TensorD({1}));
        params = GateParams{&set.at("g.mlp.w0"), &set.at("g.mlp.b0"), &set.at("g.mlp.w1"),
                            &set.at("g.mlp.b1"), &set.at("g.conv.w"), &set.at("g.conv.b")};
    }
};

EncoderConfig micro_encoder_config() {
    EncoderConfig cfg;
    cfg.backbone.widths = {4, 8, 16, 32};
    cfg.backbone.downsample = {2, 4, 8, 16};
    cfg.backbone.layers_per_block = 1;
    cfg.spectral_dim = 4;
    return cfg;
}

}  // namespace

TEST_CASE("feature attention: zero parameters give a 0.5 gate") {
    ScratchGate gate(3, 4);
    ad::Graph g;
    nn::Binder b(g);
    Var f = g.constant(random_grid({3, 4, 4}, 1));
    Var out = feature_attention(b, f, gate.params);
    CHECK(g.val(out).shape == std::vector<int>{3});
    for (int i = 0; i < 3; ++i) CHECK(g.val(out).data[i] == doctest::Approx(0.5));
}

TEST_CASE("feature attention: pooling degeneracy on a constant grid") {
    // constant grid: avg pool == max pool, so gate = sigmoid(2 * MLP(v))
    ScratchGate gate(2, 2);
    Rng rng(3);
    for (Eigen::Index i = 0; i < gate.params.mlp_w0->value.numel(); ++i)
        gate.params.mlp_w0->value(i) = rng.normal();
    for (Eigen::Index i = 0; i < gate.params.mlp_w1->value.numel(); ++i)
        gate.params.mlp_w1->value(i) = rng.normal();

    TensorD grid({2, 3, 3});
    grid.data.head(9).setConstant(1.5);
    grid.data.tail(9).setConstant(-0.5);
    ad::Graph g;
    nn::Binder b(g);
    Var out = feature_attention(b, g.constant(grid), gate.params);

    Eigen::Vector2d v(1.5, -0.5);
    Eigen::MatrixXd w0(2, 2), w1(2, 2);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            w0(r, c) = gate.params.mlp_w0->value.at(r, c);
            w1(r, c) = gate.params.mlp_w1->value.at(r, c);
        }
    Eigen::Vector2d hidden = (w0.transpose() * v).cwiseMax(0.0);
    Eigen::Vector2d mlp = w1.transpose() * hidden;
    for (int i = 0; i < 2; ++i)
        CHECK(g.val(out).data[i] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0 * mlp[i]))));
}

TEST_CASE("feature attention: hand-evaluated random 2x4x4 grid") {
    // one effective layer: first MLP layer as identity, hand-set second layer
    ScratchGate gate(2, 2);
    gate.params.mlp_w0->value.at(0, 0) = 1.0;
    gate.params.mlp_w0->value.at(1, 1) = 1.0;
    gate.params.mlp_w1->value.at(0, 0) = 0.7;
    gate.params.mlp_w1->value.at(0, 1) = -0.2;
    gate.params.mlp_w1->value.at(1, 0) = 0.4;
    gate.params.mlp_w1->value.at(1, 1) = 1.1;

    TensorD grid = random_grid({2, 4, 4}, 9);
    grid.data = grid.data.abs() + 0.1;  // positive values keep the relu transparent

    double ap0 = 0, ap1 = 0, mp0 = -1e300, mp1 = -1e300;
    for (int i = 0; i < 16; ++i) {
        ap0 += grid.data[i] / 16.0;
        ap1 += grid.data[16 + i] / 16.0;
        mp0 = std::max(mp0, grid.data[i]);
        mp1 = std::max(mp1, grid.data[16 + i]);
    }
    // shared MLP (relu transparent on positive inputs): y = W1^T x
    const double pre0 = 0.7 * ap0 + 0.4 * ap1 + 0.7 * mp0 + 0.4 * mp1;
    const double pre1 = -0.2 * ap0 + 1.1 * ap1 + -0.2 * mp0 + 1.1 * mp1;

    ad::Graph g;
    nn::Binder b(g);
    Var out = feature_attention(b, g.constant(grid), gate.params);
    CHECK(g.val(out).data[0] == doctest::Approx(1.0 / (1.0 + std::exp(-pre0))).epsilon(1e-6));
    CHECK(g.val(out).data[1] == doctest::Approx(1.0 / (1.0 + std::exp(-pre1))).epsilon(1e-6));
}

TEST_CASE("position attention: zero kernel gives 0.5 and output range is (0,1)") {
    ScratchGate gate(3, 4);
    ad::Graph g;
    nn::Binder b(g);
    Var f = g.constant(random_grid({3, 5, 5}, 4));
    Var out = position_attention(b, f, gate.params);
    CHECK(g.val(out).shape == std::vector<int>{1, 5, 5});
    for (Eigen::Index i = 0; i < 25; ++i) CHECK(g.val(out).data[i] == doctest::Approx(0.5));

    Rng rng(5);
    for (Eigen::Index i = 0; i < gate.params.conv_w->value.numel(); ++i)
        gate.params.conv_w->value(i) = rng.normal();
    ad::Graph g2;
    nn::Binder b2(g2);
    Var out2 = position_attention(b2, g2.constant(random_grid({3, 5, 5}, 6)), gate.params);
    for (Eigen::Index i = 0; i < 25; ++i) {
        CHECK(g2.val(out2).data[i] > 0.0);
        CHECK(g2.val(out2).data[i] < 1.0);
    }
}

TEST_CASE("position attention: constant-input oracle including truncated borders") {
    // single channel constant grid v: channel max == mean == v everywhere;
    // conv output at (y,x) = v * (sum of kernel entries overlapping the grid)
    ScratchGate gate(1, 4);
    Rng rng(6);
    for (Eigen::Index i = 0; i < gate.params.conv_w->value.numel(); ++i)
        gate.params.conv_w->value(i) = rng.normal(0.0, 0.3);
    const double v = 0.8;
    const int n = 8;
    TensorD grid = TensorD::full({1, n, n}, v);
    ad::Graph g;
    nn::Binder b(g);
    Var out = position_attention(b, g.constant(grid), gate.params);

    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < 2; ++ch)
                for (int dy = 0; dy < 7; ++dy)
                    for (int dx = 0; dx < 7; ++dx) {
                        const int yy = y + dy - 3, xx = x + dx - 3;
                        if (yy < 0 || yy >= n || xx < 0 || xx >= n) continue;
                        acc += gate.params.conv_w->value.data[(ch * 7 + dy) * 7 + dx] * v;
                    }
            const double want = 1.0 / (1.0 + std::exp(-acc));
            CHECK(g.val(out).at(0, y, x) == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("attention enhance: forced gates") {
    // gates forced to 1: huge positive MLP bias and conv bias saturate sigmoid
    ScratchGate gate(2, 2);
    gate.params.mlp_b1->value.data.setConstant(1e3);
    gate.params.conv_b->value.data.setConstant(1e3);
    TensorD f = random_grid({2, 3, 3}, 7);
    {
        ad::Graph g;
        nn::Binder b(g);
        Var out = attention_enhance(b, g.constant(f), gate.params);
        CHECK((g.val(out).data - f.data).abs().maxCoeff() < 1e-12);
    }
    // channel gate forced to 0 annihilates the output
    gate.params.mlp_b1->value.data.setConstant(-1e3);
    {
        ad::Graph g;
        nn::Binder b(g);
        Var out = attention_enhance(b, g.constant(f), gate.params);
        CHECK(g.val(out).data.abs().maxCoeff() < 1e-300);
    }
}

TEST_CASE("attention enhance: hand-set gates on a 2x2x2 grid") {
    ScratchGate gate(2, 2);
    // drive the channel gate via the bias to hand-computable values and keep
    // the position gate at 0.5 with a zero conv; the shared MLP runs on both
    // pooled vectors, so the bias contributes twice before the sigmoid
    gate.params.mlp_b1->value.data[0] = 1.0;
    gate.params.mlp_b1->value.data[1] = -0.5;
    TensorD f = random_grid({2, 2, 2}, 8);
    ad::Graph g;
    nn::Binder b(g);
    Var out = attention_enhance(b, g.constant(f), gate.params);
    const double g0 = 1.0 / (1.0 + std::exp(-2.0));
    const double g1 = 1.0 / (1.0 + std::exp(1.0));
    for (int i = 0; i < 4; ++i) {
        CHECK(g.val(out).data[i] == doctest::Approx(f.data[i] * g0 * 0.5));
        CHECK(g.val(out).data[4 + i] == doctest::Approx(f.data[4 + i] * g1 * 0.5));
    }
}

TEST_CASE("afm layer: zeroed side streams reduce to the enhanced main stream") {
    FusionEncoder enc(micro_encoder_config(), 3);
    const int w = 8;  // block 1 width
    TensorD e = random_grid({w, 4, 4}, 10);
    TensorD zero = TensorD::zeros({w, 4, 4});

    ad::Graph g;
    nn::Binder b(g);
    Var out = enc.afm_layer(b, g.constant(e), g.constant(zero), g.constant(zero), 1, 0);

    // reference: enhance the main stream only, then MLP_i -> GELU -> MLP_b
    ad::Graph g2;
    nn::Binder b2(g2);
    Var enhanced = attention_enhance(b2, g2.constant(e), enc.gate_params(1, 0, "main"));
    auto conv1x1 = [&](Var x, const std::string& w_name, const std::string& b_name) {
        return ad::conv2d(g2, x, b2(enc.afm_params().at(w_name)),
                          b2(enc.afm_params().at(b_name)), 1, 0);
    };
    Var mi = conv1x1(ad::gelu(g2, conv1x1(enhanced, "afm.block1.layer0.mlp_i.w1",
                                          "afm.block1.layer0.mlp_i.b1")),
                     "afm.block1.layer0.mlp_i.w2", "afm.block1.layer0.mlp_i.b2");
    Var want = conv1x1(ad::gelu(g2, conv1x1(ad::gelu(g2, mi), "afm.block1.mlp_b.w1",
                                            "afm.block1.mlp_b.b1")),
                       "afm.block1.mlp_b.w2", "afm.block1.mlp_b.b2");
    CHECK((g.val(out).data - g2.val(want).data).abs().maxCoeff() < 1e-12);

    TensorD wrong = TensorD::zeros({w, 2, 2});
    ad::Graph g3;
    nn::Binder b3(g3);
    CHECK_THROWS_AS(
        enc.afm_layer(b3, g3.constant(e), g3.constant(wrong), g3.constant(zero), 1, 0),
        ValidationError);
}

TEST_CASE("afm layer: identity surgery turns the block into plain addition") {
    EncoderConfig cfg = micro_encoder_config();
    FusionEncoder enc(cfg, 4);
    const int block = 2, w = 16;

    // gates to 1
    for (const char* stream : {"main", "hf", "spe"}) {
        GateParams gp = enc.gate_params(block, 0, stream);
        gp.mlp_w0->value.data.setZero();
        gp.mlp_w1->value.data.setZero();
        gp.mlp_b0->value.data.setZero();
        gp.mlp_b1->value.data.setConstant(1e3);
        gp.conv_w->value.data.setZero();
        gp.conv_b->value.data.setConstant(1e3);
    }
    // MLPs to (numerical) identity: y = (1/s) * GELU(s * x) for positive x
    auto ident = [&](const std::string& prefix) {
        nn::Parameter& w1 = enc.afm_params().at(prefix + ".w1");
        nn::Parameter& b1 = enc.afm_params().at(prefix + ".b1");
        nn::Parameter& w2 = enc.afm_params().at(prefix + ".w2");
        nn::Parameter& b2 = enc.afm_params().at(prefix + ".b2");
        w1.value.data.setZero();
        w2.value.data.setZero();
        b1.value.data.setZero();
        b2.value.data.setZero();
        for (int i = 0; i < w; ++i) {
            w1.value.data[(i * w + i)] = 100.0;
            w2.value.data[(i * w + i)] = 0.01;
        }
    };
    ident("afm.block2.layer0.mlp_i");
    ident("afm.block2.mlp_b");

    // positive inputs keep every GELU in its linear regime
    TensorD e = random_grid({w, 4, 4}, 11);
    e.data = e.data.abs() + 5.0;
    TensorD hf = random_grid({w, 4, 4}, 12);
    hf.data = hf.data.abs() + 5.0;
    TensorD spe = random_grid({w, 4, 4}, 13);
    spe.data = spe.data.abs() + 5.0;

    ad::Graph g;
    nn::Binder b(g);
    Var out = enc.afm_layer(b, g.constant(e), g.constant(hf), g.constant(spe), block, 0);
    TensorD want({w, 4, 4});
    want.data = e.data + hf.data + spe.data;
    CHECK((g.val(out).data - want.data).abs().maxCoeff() < 1e-9);
}

TEST_CASE("encode stride arithmetic at 256 with default config") {
    EncoderConfig cfg;  // default widths 32/64/128/256, strides 4/8/16/32
    cfg.spectral_dim = 8;
    FusionEncoder enc(cfg, 5);
    TensorD rgb = random_grid({3, 256, 256}, 20, 0.5);
    TensorD hf = random_grid({6, 256, 256}, 21, 0.5);
    ad::Graph g;
    nn::Binder b(g);
    std::array<Var, 4> spe{};
    for (int i = 0; i < 4; ++i) spe[static_cast<size_t>(i)] = g.constant(random_grid({8, 32, 32}, 22 + static_cast<uint64_t>(i)));
    auto feats = enc.forward(b, rgb, hf, spe);
    CHECK(g.val(feats.per_block[0]).shape == std::vector<int>{32, 64, 64});
    CHECK(g.val(feats.per_block[1]).shape == std::vector<int>{64, 32, 32});
    CHECK(g.val(feats.per_block[2]).shape == std::vector<int>{128, 16, 16});
    CHECK(g.val(feats.per_block[3]).shape == std::vector<int>{256, 8, 8});
    CHECK(g.val(feats.decoder_embedding).shape == std::vector<int>{128, 16, 16});
}

TEST_CASE("afm ablation reproduces the plain backbone") {
    EncoderConfig cfg = micro_encoder_config();
    FusionEncoder enc(cfg, 6);
    TensorD rgb = random_grid({3, 32, 32}, 30);
    TensorD hf = random_grid({6, 32, 32}, 31);

    ad::Graph g;
    nn::Binder b(g);
    std::array<Var, 4> spe{};
    for (int i = 0; i < 4; ++i) spe[static_cast<size_t>(i)] = g.constant(random_grid({4, 8, 8}, 32));
    enc.set_afm_enabled(false);
    auto ablated = enc.forward(b, rgb, hf, spe);

    ad::Graph g2;
    nn::Binder b2(g2);
    auto plain = enc.backbone_only(b2, rgb);
    for (int i = 0; i < 4; ++i)
        CHECK((g.val(ablated.per_block[static_cast<size_t>(i)]).data -
               g2.val(plain.per_block[static_cast<size_t>(i)]).data)
                  .abs()
                  .maxCoeff() == 0.0);
    enc.set_afm_enabled(true);
}

TEST_CASE("freeze contract: training steps leave the backbone bit-identical") {
    EncoderConfig cfg = micro_encoder_config();
    FusionEncoder enc(cfg, 7);
    for (auto* p : enc.backbone_params().all()) CHECK_FALSE(p->trainable);

    const uint64_t backbone_before = nn::params_checksum(enc.backbone_params().all());
    const uint64_t afm_before = nn::params_checksum(enc.afm_params().all());

    nn::AdamW opt;
    TensorD rgb = random_grid({3, 32, 32}, 40);
    TensorD hf = random_grid({6, 32, 32}, 41);
    for (int step = 0; step < 2; ++step) {
        for (auto* p : enc.afm_params().all()) p->zero_grad();
        ad::Graph g;
        nn::Binder b(g);
        std::array<Var, 4> spe{};
        for (int i = 0; i < 4; ++i) spe[static_cast<size_t>(i)] = g.constant(random_grid({4, 8, 8}, 42));
        auto feats = enc.forward(b, rgb, hf, spe);
        g.backward(ad::mean_all(g, feats.decoder_embedding));
        opt.step(1e-3, b.harvest());
    }
    CHECK(nn::params_checksum(enc.backbone_params().all()) == backbone_before);
    CHECK(nn::params_checksum(enc.afm_params().all()) != afm_before);
}

TEST_CASE("afm parameter gradients match finite differences") {
    EncoderConfig cfg = micro_encoder_config();
    FusionEncoder enc(cfg, 8);
    TensorD rgb = random_grid({3, 16, 16}, 50);
    TensorD hf = random_grid({6, 16, 16}, 51);
    std::array<TensorD, 4> spe_data;
    for (int i = 0; i < 4; ++i) spe_data[static_cast<size_t>(i)] = random_grid({4, 4, 4}, 52 + static_cast<uint64_t>(i));
    TensorD weights = random_grid({16, 2, 2}, 56);

    auto loss_value = [&]() {
        ad::Graph g;
        nn::Binder b(g);
        std::array<Var, 4> spe{};
        for (int i = 0; i < 4; ++i) spe[static_cast<size_t>(i)] = g.constant(spe_data[static_cast<size_t>(i)]);
        auto feats = enc.forward(b, rgb, hf, spe);
        return g.val(ad::sum_all(g, ad::mul(g, feats.decoder_embedding, g.constant(weights))))
            .data[0];
    };

    for (auto* p : enc.afm_params().all()) p->zero_grad();
    {
        ad::Graph g;
        nn::Binder b(g);
        std::array<Var, 4> spe{};
        for (int i = 0; i < 4; ++i) spe[static_cast<size_t>(i)] = g.constant(spe_data[static_cast<size_t>(i)]);
        auto feats = enc.forward(b, rgb, hf, spe);
        g.backward(ad::sum_all(g, ad::mul(g, feats.decoder_embedding, g.constant(weights))));
        b.harvest();
    }

    Rng pick(60);
    for (const char* name :
         {"afm.block1.layer0.gate_main.mlp.w0", "afm.block2.layer0.gate_hf.conv.w",
          "afm.block0.layer0.tune_spe.w1", "afm.block3.layer0.mlp_i.w1", "afm.block2.mlp_b.w2",
          "afm.neck.w"}) {
        nn::Parameter& p = enc.afm_params().at(name);
        for (int probe = 0; probe < 4; ++probe) {
            const Eigen::Index idx = pick.uniform_int(static_cast<int>(p.value.numel()));
            const double fd = oracles::fd_grad(p, idx, loss_value, 1e-5);
            INFO(name, "[", idx, "]");
            CHECK(oracles::grad_close(p.grad.data[idx], fd, 1e-3, 1e-7));
        }
    }
}
