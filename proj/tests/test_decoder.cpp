#include <doctest.h>

#include "landseg/model/decoder.hpp"
#include "oracles.hpp"

using namespace landseg;
using ad::Var;

namespace {

DecoderConfig micro_decoder_config() {
    DecoderConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.ffn_hidden = 32;
    cfg.text_dim = 8;
    cfg.out_feat = 4;
    cfg.skip1_width = 8;
    cfg.skip2_width = 4;
    cfg.up_strides = {4, 2};  // block-3 stride 8 in the micro encoder
    return cfg;
}

TensorD random_grid(std::vector<int> shape, uint64_t seed) {
    Rng rng(seed);
    TensorD t(std::move(shape));
    for (Eigen::Index i = 0; i < t.numel(); ++i) t(i) = rng.normal();
    return t;
}

// Synthetic encoder features for a 16x16 input with strides 2/4/8/16.
EncoderFeaturesVars make_features(ad::Graph& g, int h, uint64_t seed) {
    EncoderFeaturesVars f;
    f.per_block[0] = g.constant(random_grid({4, h / 2, h / 2}, seed));
    f.per_block[1] = g.constant(random_grid({8, h / 4, h / 4}, seed + 1));
    f.per_block[2] = g.constant(random_grid({16, h / 8, h / 8}, seed + 2));
    f.per_block[3] = g.constant(random_grid({32, h / 16, h / 16}, seed + 3));
    f.decoder_embedding = f.per_block[2];
    return f;
}

std::vector<Eigen::VectorXd> random_prompts(int k, int dim, uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd v(dim);
        for (int j = 0; j < dim; ++j) v[j] = rng.normal();
        out.push_back(v.normalized());
    }
    return out;
}

}  // namespace

TEST_CASE("class-count flexibility from one parameter set") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 1);
    for (int k : {1, 3, 14}) {
        ad::Graph g;
        nn::Binder b(g);
        auto feats = make_features(g, 16, 10);
        Var logits = dec.decode(b, feats, random_prompts(k, 8, 20));
        CHECK(g.val(logits).shape == std::vector<int>{k, 16, 16});
    }
}

TEST_CASE("output resolution tracks the input for several sizes") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 2);
    for (int h : {16, 32, 48}) {
        ad::Graph g;
        nn::Binder b(g);
        auto feats = make_features(g, h, 30);
        Var logits = dec.decode(b, feats, random_prompts(2, 8, 21));
        CHECK(g.val(logits).shape == std::vector<int>{2, h, h});
    }
}

TEST_CASE("duplicated prompts produce bit-identical logit channels") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 3);
    auto prompts = random_prompts(3, 8, 22);
    prompts.push_back(prompts[1]);  // duplicate class 1 as class 3
    ad::Graph g;
    nn::Binder b(g);
    auto feats = make_features(g, 16, 40);
    Var logits = dec.decode(b, feats, prompts);
    const TensorD& z = g.val(logits);
    const Eigen::Index hw = 256;
    CHECK((z.data.segment(1 * hw, hw) - z.data.segment(3 * hw, hw)).abs().maxCoeff() == 0.0);
}

TEST_CASE("prompt permutation permutes the logits") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 4);
    auto prompts = random_prompts(4, 8, 23);
    const std::array<int, 4> perm{2, 0, 3, 1};
    std::vector<Eigen::VectorXd> permuted;
    for (int i : perm) permuted.push_back(prompts[static_cast<size_t>(i)]);

    ad::Graph g1, g2;
    nn::Binder b1(g1), b2(g2);
    Var z1 = dec.decode(b1, make_features(g1, 16, 50), prompts);
    Var z2 = dec.decode(b2, make_features(g2, 16, 50), permuted);
    const Eigen::Index hw = 256;
    for (int i = 0; i < 4; ++i) {
        const auto a = g2.val(z2).data.segment(i * hw, hw);
        const auto bseg = g1.val(z1).data.segment(perm[static_cast<size_t>(i)] * hw, hw);
        CHECK((a - bseg).abs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("prompt dimension mismatch is rejected") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 5);
    ad::Graph g;
    nn::Binder b(g);
    auto feats = make_features(g, 16, 60);
    CHECK_THROWS_AS(dec.decode(b, feats, random_prompts(2, 9, 24)), ValidationError);
    CHECK_THROWS_AS(dec.decode(b, feats, {}), ValidationError);
}

TEST_CASE("predict_probs: singleton, uniform, and scalar softmax oracles") {
    TensorD one({1, 2, 2});
    one.data << 3.0, -1.0, 0.5, 7.0;
    ProbabilityStack p1 = predict_probs(one, "t");
    CHECK((p1.probs.data - 1.0).abs().maxCoeff() == 0.0);

    TensorD uniform = TensorD::full({4, 2, 2}, 0.37);
    ProbabilityStack p4 = predict_probs(uniform, "t");
    CHECK((p4.probs.data - 0.25).abs().maxCoeff() < 1e-15);
    for (int c = 0; c < 4; ++c) CHECK(p4.class_confidences[c] == doctest::Approx(0.25));

    TensorD pair({2, 1, 1});
    pair.data << 2.0, 0.0;
    ProbabilityStack p2 = predict_probs(pair, "t");
    CHECK(p2.probs.data[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(p2.probs.data[1] == doctest::Approx(0.1192).epsilon(1e-4));
}

TEST_CASE("decoded probabilities form a per-pixel simplex") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 6);
    ad::Graph g;
    nn::Binder b(g);
    Var logits = dec.decode(b, make_features(g, 16, 70), random_prompts(5, 8, 25));
    ProbabilityStack probs = predict_probs(g.val(logits), "t");
    probs.validate(1e-9);
}

TEST_CASE("decoder parameter gradients match finite differences") {
    SegDecoder dec(micro_decoder_config(), "decoder.", 7);
    auto prompts = random_prompts(2, 8, 26);
    std::array<TensorD, 4> grids = {random_grid({4, 8, 8}, 80), random_grid({8, 4, 4}, 81),
                                    random_grid({16, 2, 2}, 82), random_grid({32, 1, 1}, 83)};
    TensorD weights = random_grid({2, 16, 16}, 84);

    auto build = [&](ad::Graph& g, nn::Binder& b) {
        EncoderFeaturesVars f;
        for (int i = 0; i < 4; ++i) f.per_block[static_cast<size_t>(i)] = g.constant(grids[static_cast<size_t>(i)]);
        f.decoder_embedding = f.per_block[2];
        Var z = dec.decode(b, f, prompts);
        return ad::sum_all(g, ad::mul(g, z, g.constant(weights)));
    };
    auto loss_value = [&]() {
        ad::Graph g;
        nn::Binder b(g);
        return g.val(build(g, b)).data[0];
    };

    for (auto* p : dec.params().all()) p->zero_grad();
    {
        ad::Graph g;
        nn::Binder b(g);
        g.backward(build(g, b));
        b.harvest();
    }

    Rng pick(90);
    for (const char* name :
         {"decoder.align.w", "decoder.xattn_text.wq", "decoder.xattn_image.wv",
          "decoder.xattn_weights.ffn.w1", "decoder.up1.w", "decoder.skip2.w",
          "decoder.wgen.w2"}) {
        nn::Parameter& p = dec.params().at(name);
        for (int probe = 0; probe < 4; ++probe) {
            const Eigen::Index idx = pick.uniform_int(static_cast<int>(p.value.numel()));
            const double fd = oracles::fd_grad(p, idx, loss_value, 1e-5);
            INFO(name, "[", idx, "]");
            CHECK(oracles::grad_close(p.grad.data[idx], fd, 1e-3, 1e-7));
        }
    }
}
