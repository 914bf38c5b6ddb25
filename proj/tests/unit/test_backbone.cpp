#include "idprior/backbone/checkpoint.hpp"
#include "idprior/backbone/model.hpp"
#include "idprior/core/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace idprior;
using namespace idprior::backbone;

namespace {

Raster random_image(std::uint64_t seed, int side = 32) {
    Raster r(side, side, 3);
    Rng rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : r.pixels) v = u(rng);
    return r;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_side = 16;
    c.patch_size = 8;
    c.encoder_layers = 2;
    c.encoder_dim = 8;
    c.decoder_layers = 1;
    c.decoder_dim = 8;
    c.heads = 2;
    c.max_sequence = 32;
    return c;
}

// Context of visual tokens followed by a text prompt.
TokenSequence visual_prompt(const VisionLanguageModel& m, const Raster& img, const std::string& text) {
    TokenSequence seq = TokenSequence::from_ids({kBosToken});
    seq.append(m.project_visual(m.encode_image(img)));
    seq.append(m.vocabulary().tokenize(text));
    return seq;
}

}  // namespace

TEST(Encoder, ShapesForZeroImage) {
    VisionLanguageModel m(ModelConfig{});
    const auto f = m.encode_image(Raster(32, 32, 3));
    ASSERT_EQ(f.size(), 5u);
    for (const Mat& layer : f.per_layer) {
        EXPECT_EQ(layer.rows(), 16);
        EXPECT_EQ(layer.cols(), 64);
    }
}

TEST(Encoder, DeterministicAndLayersDiffer) {
    VisionLanguageModel m(ModelConfig{});
    const Raster img = random_image(3);
    const auto a = m.encode_image(img);
    const auto b = m.encode_image(img);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a.per_layer[k], b.per_layer[k]);
    EXPECT_GT((a.per_layer[0] - a.per_layer[4]).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, WrongShapeIsConfigError) {
    VisionLanguageModel m(ModelConfig{});
    EXPECT_THROW(m.encode_image(Raster(16, 32, 3)), ConfigError);
}

TEST(Projection, ReadsDeepestLayerOnly) {
    VisionLanguageModel m(ModelConfig{});
    auto f = m.encode_image(random_image(4));
    const auto a = m.project_visual(f);
    EXPECT_EQ(a.size(), 16u);
    EXPECT_EQ(a.embeddings.rows(), 16);
    EXPECT_EQ(a.embeddings.cols(), 64);
    EXPECT_EQ(a.embeddings, m.project_visual(f).embeddings);
    f.per_layer[0].array() += 1.0;
    EXPECT_EQ(a.embeddings, m.project_visual(f).embeddings);
}

TEST(Vocabulary, ExtensionAllocatesTenIds) {
    VisionLanguageModel m(ModelConfig{});
    Rng rng(5);
    const auto ext = m.extend_vocabulary(10, InitPolicy::mean_plus_noise, rng);
    EXPECT_EQ(ext.start_id, 64);
    EXPECT_EQ(ext.end_id(), 74);
    EXPECT_EQ(m.vocab_size(), 74);
    EXPECT_THROW(m.extend_vocabulary(0, InitPolicy::zeros, rng), ArgumentError);
}

TEST(Vocabulary, ExtensionLeavesBaseLogitsExact) {
    VisionLanguageModel m(ModelConfig{});
    const auto prompt = visual_prompt(m, random_image(6), "describe :");
    const Mat before = m.logits(prompt);
    const Mat tok_before = m.parameters().at("backbone.dec.tok").value;
    Rng rng(5);
    m.extend_vocabulary(10, InitPolicy::mean_plus_noise, rng);
    const Mat after = m.logits(prompt);
    ASSERT_EQ(after.cols(), 74);
    EXPECT_EQ(before, after.leftCols(64));
    EXPECT_EQ(tok_before, m.parameters().at("backbone.dec.tok").value);
}

TEST(Vocabulary, MeanPlusNoiseAndZerosPolicies) {
    VisionLanguageModel m(ModelConfig{});
    Rng rng(5);
    const auto e1 = m.extend_vocabulary(200, InitPolicy::mean_plus_noise, rng);
    const Mat& in = m.parameters().at(e1.input_param).value;
    const Eigen::RowVectorXd base_mean = m.parameters().at("backbone.dec.tok").value.colwise().mean();
    const Mat centered = in.rowwise() - base_mean;
    const double sd = std::sqrt(centered.array().square().mean());
    EXPECT_NEAR(sd, 0.02, 0.002);
    const auto e2 = m.extend_vocabulary(3, InitPolicy::zeros, rng);
    EXPECT_TRUE(m.parameters().at(e2.input_param).value.isZero(0.0));
    EXPECT_TRUE(m.parameters().at(e2.output_param).value.isZero(0.0));
}

TEST(Decode, MaxNewZeroAndDeterminism) {
    VisionLanguageModel m(ModelConfig{});
    const auto ctx = visual_prompt(m, random_image(7), "synthesis artifacts ?");
    EXPECT_EQ(m.decode_greedy(ctx, 0).ids, ctx.ids);
    EXPECT_EQ(m.decode_greedy(ctx, 5).ids, m.decode_greedy(ctx, 5).ids);
    EXPECT_THROW(m.decode_greedy(ctx, 256), SequenceLengthError);
}

TEST(Decode, CachedMatchesFullRecompute) {
    VisionLanguageModel m(ModelConfig{});
    Rng rng(11);
    const auto ext = m.extend_vocabulary(3, InitPolicy::mean_plus_noise, rng);
    // Larger output rows so the argmax moves between steps.
    m.parameters().at("backbone.dec.out").value *= 50.0;
    m.parameters().at(ext.output_param).value = Mat::Random(3, 64) * 2.0;
    auto ctx = visual_prompt(m, random_image(9), "synthesis artifacts ?");
    ctx.append(std::vector<int>{ext.start_id, ext.start_id + 2});
    TokenSequence naive = ctx;
    for (int step = 0; step < 12; ++step) {
        Eigen::Index best = 0;
        Eigen::RowVectorXd z = m.logits(naive).bottomRows(1).row(0);
        z(kImageToken) = -1e300;
        z.maxCoeff(&best);
        naive.ids.push_back(static_cast<int>(best));
        if (best == kEosToken) break;
    }
    ASSERT_GT(naive.size(), ctx.size() + 4);
    EXPECT_EQ(m.decode_greedy(ctx, 12).ids, naive.ids);
}

TEST(Decode, OverfitEmitsYes) {
    VisionLanguageModel m(tiny_config());
    m.parameters().set_trainable(true);
    const auto ctx = visual_prompt(m, random_image(8, 16), "synthesis artifacts ?");
    const int yes = m.vocabulary().id("Yes");
    std::vector<int> targets(ctx.size(), kPadToken);
    std::vector<bool> mask(ctx.size(), false);
    targets.back() = yes;
    mask.back() = true;
    for (int step = 0; step < 60; ++step) {
        for (Parameter* p : m.parameters().all()) p->zero_grad();
        ag::Tape t;
        auto parts = m.masked_cross_entropy(t, ctx.ids, t.constant(ctx.embeddings), targets, mask);
        t.backward(parts.sum);
        for (Parameter* p : m.parameters().all()) p->value -= 0.5 * p->grad;
    }
    EXPECT_LT(m.forward_loss(ctx, targets, mask), 0.05);
    EXPECT_EQ(m.decode_greedy(ctx, 1).ids.back(), yes);
}

TEST(Loss, OneHotPredictionIsNearZero) {
    VisionLanguageModel m(ModelConfig{});
    // Constant final hidden state e_0, output row of the target aligned with it.
    m.parameters().at("backbone.dec.ln_f.g").value.setZero();
    Mat& beta = m.parameters().at("backbone.dec.ln_f.b").value;
    beta.setZero();
    beta(0, 0) = 1.0;
    Mat& out = m.parameters().at("backbone.dec.out").value;
    out.setZero();
    out(m.vocabulary().id("No"), 0) = 1000.0;
    const auto seq = TokenSequence::from_ids(m.vocabulary().tokenize("<bos> same appearance ?"));
    std::vector<int> tgt(seq.size(), m.vocabulary().id("No"));
    std::vector<bool> mask(seq.size(), true);
    const double loss = m.forward_loss(seq, tgt, mask);
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, 1e-6);
}

TEST(Loss, UniformLogitsGiveLogV) {
    VisionLanguageModel m(ModelConfig{});
    m.parameters().at("backbone.dec.out").value.setZero();
    const auto seq = TokenSequence::from_ids(m.vocabulary().tokenize("<bos> describe :"));
    std::vector<int> tgt = {4, 5, 6};
    EXPECT_NEAR(m.forward_loss(seq, tgt, {true, true, true}), std::log(64.0), 1e-12);
}

TEST(Loss, MatchesLogSoftmaxOracle) {
    VisionLanguageModel m(ModelConfig{});
    Rng rng(11);
    m.extend_vocabulary(6, InitPolicy::mean_plus_noise, rng);
    const auto seq = visual_prompt(m, random_image(12), "person same behavior ? Yes");
    std::vector<int> tgt(seq.size());
    std::vector<bool> mask(seq.size());
    std::uniform_int_distribution<int> pick(0, m.vocab_size() - 1);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        tgt[i] = pick(rng);
        mask[i] = i % 3 != 0;
    }
    const Mat z = m.logits(seq);
    long double total = 0.0L;
    int n = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        long double mx = z(i, 0);
        for (Eigen::Index j = 1; j < z.cols(); ++j) mx = std::max<long double>(mx, z(i, j));
        long double s = 0.0L;
        for (Eigen::Index j = 0; j < z.cols(); ++j) s += std::exp(static_cast<long double>(z(i, j)) - mx);
        total += -(static_cast<long double>(z(i, tgt[static_cast<std::size_t>(i)])) - mx - std::log(s));
        ++n;
    }
    EXPECT_NEAR(m.forward_loss(seq, tgt, mask), static_cast<double>(total / n), 1e-6);
}

TEST(Loss, EmptyMaskIsDegenerate) {
    VisionLanguageModel m(ModelConfig{});
    const auto seq = TokenSequence::from_ids({1, 4});
    EXPECT_THROW(m.forward_loss(seq, std::vector<int>{4, 5}, {false, false}), DegenerateBatchError);
}

TEST(Gradients, MatchCentralDifferences) {
    ModelConfig cfg = tiny_config();
    VisionLanguageModel m(cfg);
    Rng rng(13);
    m.extend_vocabulary(4, InitPolicy::mean_plus_noise, rng);
    m.parameters().set_trainable(true);
    const Raster img = random_image(14, 16);
    std::vector<int> ids = {kBosToken, kImageToken, kImageToken, kImageToken, kImageToken, 10, 65, 30};
    std::vector<int> tgt = {5, 7, 9, 11, 13, 66, 4, 2};
    std::vector<bool> mask = {false, true, true, true, true, true, true, true};

    auto loss = [&](bool grad) {
        ag::Tape t;
        auto feats = m.encode(t, img);
        auto vis = m.project(t, feats.back());
        auto parts = m.masked_cross_entropy(t, ids, vis, tgt, mask);
        if (grad) t.backward(parts.sum);
        return parts.sum.scalar();
    };
    for (Parameter* p : m.parameters().all()) p->zero_grad();
    loss(true);

    const double h = 1e-4;
    int checked = 0, good = 0;
    for (Parameter* p : m.parameters().all()) {
        std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
        for (int s = 0; s < 4; ++s) {
            const Eigen::Index k = pick(rng);
            double* v = p->value.data() + k;
            const double keep = *v;
            *v = keep + h;
            const double up = loss(false);
            *v = keep - h;
            const double down = loss(false);
            *v = keep;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data()[k];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            ++checked;
            if (std::abs(numeric - analytic) / denom <= 1e-3) ++good;
        }
    }
    EXPECT_GE(static_cast<double>(good), 0.95 * checked) << good << "/" << checked;
}

TEST(Checkpoint, BitExactRoundTrip) {
    VisionLanguageModel m(ModelConfig{});
    Rng rng(15);
    m.extend_vocabulary(10, InitPolicy::mean_plus_noise, rng);
    m.vocabulary().add_alias(64, "<id_a:x>");
    Checkpoint ck;
    m.export_to(ck);
    ck.header["stage"] = "test";
    const auto path = std::filesystem::temp_directory_path() / "idprior_test_ckpt.bin";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_TRUE(back == ck);
    const auto m2 = VisionLanguageModel::import_from(back);
    EXPECT_EQ(m2.vocab_size(), 74);
    EXPECT_EQ(m2.vocabulary().id("<id_a:x>"), 64);
    for (const Parameter* p : m.parameters().all()) EXPECT_EQ(p->value, m2.parameters().at(p->name).value) << p->name;
    const auto prompt = visual_prompt(m, random_image(16), "describe :");
    EXPECT_EQ(m.logits(prompt), m2.logits(prompt));
}

TEST(Checkpoint, CorruptFileRejected) {
    EXPECT_THROW(deserialize_checkpoint("IDPCKPT1garbage"), CheckpointError);
}
