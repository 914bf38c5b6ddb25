#include "idprior/core/errors.hpp"
#include "idprior/identity/registry.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace idprior;
using namespace idprior::identity;
using backbone::ModelConfig;
using backbone::VisionLanguageModel;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.encoder_layers = 2;
    c.decoder_layers = 1;
    c.encoder_dim = 16;
    c.decoder_dim = 16;
    c.heads = 2;
    return c;
}

}  // namespace

TEST(Registry, FourSoftTokensAllocateTen) {
    VisionLanguageModel m(ModelConfig{});
    IdentityRegistry reg;
    Rng rng(1);
    const auto& p = reg.register_identity(m, "alice", 4, rng);
    EXPECT_EQ(p.token_count(), 10);
    EXPECT_EQ(m.vocab_size(), 74);
    EXPECT_EQ(p.id_a_token, 64);
    EXPECT_EQ(p.soft_a, (std::vector<int>{65, 66, 67, 68}));
    EXPECT_EQ(p.id_b_token, 69);
    EXPECT_EQ(p.soft_b, (std::vector<int>{70, 71, 72, 73}));
    EXPECT_EQ(m.vocabulary().id("<id_a:alice>"), 64);
    EXPECT_EQ(m.vocabulary().id("<soft_b:alice:3>"), 73);
}

TEST(Registry, OneSoftTokenAllocatesFour) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    EXPECT_EQ(reg.register_identity(m, "a", 1, rng).token_count(), 4);
}

TEST(Registry, TwoIdentitiesDisjointRanges) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    const int before = m.vocab_size();
    const auto a = reg.register_identity(m, "a", 4, rng);
    const auto b = reg.register_identity(m, "b", 4, rng);
    EXPECT_EQ(m.vocab_size() - before, 20);
    EXPECT_LE(a.extension.end_id(), b.extension.start_id);
}

TEST(Registry, DuplicateAndBadArguments) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    reg.register_identity(m, "a", 2, rng);
    EXPECT_THROW(reg.register_identity(m, "a", 2, rng), RegistrationError);
    EXPECT_THROW(reg.register_identity(m, "b", 0, rng), RegistrationError);
}

TEST(Registry, SingleLayoutUsesOneIdentifier) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    const auto& p = reg.register_identity(m, "a", 4, rng, backbone::InitPolicy::mean_plus_noise, TokenLayout::single);
    EXPECT_EQ(p.token_count(), 9);
    EXPECT_EQ(expand_prompt(m.vocabulary(), "person <id> ?", p).size(), 11u);
    EXPECT_THROW(expand_prompt(m.vocabulary(), "person <id_a> ?", p), TemplateError);
}

TEST(ExpandPrompt, InsertsBlocks) {
    VisionLanguageModel m(ModelConfig{});
    IdentityRegistry reg;
    Rng rng(1);
    const auto& p = reg.register_identity(m, "alice", 4, rng);
    const auto& v = m.vocabulary();
    const auto plain = v.tokenize("person same appearance ?");
    EXPECT_EQ(expand_prompt(v, "person same appearance ?", p), plain);
    const auto one = expand_prompt(v, "person <id_a> same appearance ?", p);
    EXPECT_EQ(one.size(), plain.size() + 5);
    EXPECT_EQ(one[1], p.id_a_token);
    EXPECT_EQ(one[2], p.soft_a[0]);
    EXPECT_EQ(one[5], p.soft_a[3]);
    const auto two = expand_prompt(v, "person <id_a> <id_b:alice> synthesis artifacts ?", p);
    EXPECT_EQ(two.size(), 4u + 10u);
}

TEST(ExpandPrompt, UnknownPlaceholderIsTemplateError) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    const auto& a = reg.register_identity(m, "a", 2, rng);
    reg.register_identity(m, "b", 2, rng);
    EXPECT_THROW(expand_prompt(m.vocabulary(), "person <id_c> ?", a), TemplateError);
    EXPECT_THROW(expand_prompt(m.vocabulary(), "person <id_a:b> ?", a), TemplateError);
    EXPECT_THROW(expand_prompt(m.vocabulary(), "person zebra ?", a), TemplateError);
}

TEST(ExpandPrompt, DeexpandRecoversIdentifierStream) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    const auto& p = reg.register_identity(m, "a", 3, rng);
    const auto ids = expand_prompt(m.vocabulary(), "<id_a> same <id_b> behavior <id_a> ?", p);
    const auto& v = m.vocabulary();
    const std::vector<int> expect = {p.id_a_token, v.id("same"), p.id_b_token, v.id("behavior"), p.id_a_token,
                                     v.id("?")};
    EXPECT_EQ(deexpand(ids, p), expect);
}

TEST(ThetaPrior, ScalarCounts) {
    {
        VisionLanguageModel m(ModelConfig{});
        IdentityRegistry reg;
        Rng rng(1);
        const auto& p = reg.register_identity(m, "a", 4, rng);
        EXPECT_EQ(collect_theta_prior(m, p).scalar_count(), 1280);
    }
    {
        ModelConfig c = small_config();
        c.decoder_dim = 8;
        c.encoder_dim = 8;
        VisionLanguageModel m(c);
        IdentityRegistry reg;
        Rng rng(1);
        const auto& p = reg.register_identity(m, "a", 1, rng);
        EXPECT_EQ(collect_theta_prior(m, p).scalar_count(), 64);
    }
}

TEST(ThetaPrior, IdentitiesShareNoHandle) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    const auto a = reg.register_identity(m, "a", 4, rng);
    const auto b = reg.register_identity(m, "b", 4, rng);
    auto ta = collect_theta_prior(m, a);
    auto tb = collect_theta_prior(m, b);
    std::set<const Parameter*> sa(ta.params.begin(), ta.params.end());
    for (const Parameter* q : tb.params) EXPECT_EQ(sa.count(q), 0u);
    for (const Parameter* q : ta.params) EXPECT_EQ(q->value.rows(), a.token_count());
}

TEST(Registry, FileRoundTripAgainstCheckpoint) {
    VisionLanguageModel m(small_config());
    IdentityRegistry reg;
    Rng rng(1);
    reg.register_identity(m, "a", 4, rng);
    reg.register_identity(m, "b", 2, rng, backbone::InitPolicy::zeros, TokenLayout::single);
    backbone::Checkpoint ck;
    m.export_to(ck);
    auto m2 = VisionLanguageModel::import_from(ck);
    auto back = IdentityRegistry::parse(reg.serialize(), m2);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.profile("b").soft_a, reg.profile("b").soft_a);
    EXPECT_EQ(m2.vocabulary().id("<soft:b:3>"), reg.profile("b").soft_a[3]);

    VisionLanguageModel bare(small_config());
    EXPECT_THROW(IdentityRegistry::parse(reg.serialize(), bare), RegistrationError);
}

TEST(Registry, TimestampHonoursSourceDateEpoch) {
    setenv("SOURCE_DATE_EPOCH", "86400", 1);
    EXPECT_EQ(creation_timestamp(), "1970-01-02T00:00:00Z");
    unsetenv("SOURCE_DATE_EPOCH");
}
