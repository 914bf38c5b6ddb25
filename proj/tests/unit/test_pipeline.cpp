#include "idprior/core/digest.hpp"
#include "idprior/core/errors.hpp"
#include "idprior/evaluation/experiment.hpp"

#include <gtest/gtest.h>

using namespace idprior;
using namespace idprior::evaluation;

namespace {

ExperimentConfig tiny() {
    ExperimentConfig c;
    c.model.encoder_layers = 2;
    c.model.encoder_dim = 16;
    c.model.decoder_layers = 1;
    c.model.decoder_dim = 16;
    c.model.heads = 2;
    c.data.identities = 2;
    c.data.quota = {4, 4, 2, 2};
    c.data.generic_identities = 2;
    c.data.generic_real = 2;
    c.data.generic_forged = 2;
    c.train.pretrain_steps = 4;
    c.train.pretrain_batch = 2;
    c.train.stage1_steps = 3;
    c.train.max_new_tokens = 8;
    return c;
}

const Foundation& shared() {
    static const Foundation f = build_foundation(tiny());
    return f;
}

std::string checkpoint_digest(const training::Detector& d) {
    backbone::Checkpoint ckpt;
    d.export_to(ckpt);
    return sha256_hex(backbone::serialize_checkpoint(ckpt));
}

}  // namespace

TEST(Pipeline, FoundationShapes) {
    const auto& f = shared();
    EXPECT_FALSE(f.pretrained.adapter.has_value());
    ASSERT_TRUE(f.adapted.adapter.has_value());
    EXPECT_EQ(f.pretrain_result.log.steps.size(), 4u);
    EXPECT_EQ(f.stage1_result.log.steps.size(), 3u);
    EXPECT_EQ(f.dataset.targets.size(), 2u);
}

TEST(Pipeline, VariantStructure) {
    const auto& f = shared();
    const auto cfg = tiny();
    const int patches = cfg.model.patch_count();
    for (Variant v : kAllVariants) {
        const auto run = run_variant(f, v, cfg);
        EXPECT_EQ(run.predictions.size(), 8u) << to_string(v);
        EXPECT_EQ(run.report.per_identity.size(), 2u);
        EXPECT_EQ(run.detector.visual_slots(), v == Variant::no_adapter ? patches : patches + 4);
        EXPECT_EQ(run.detector.registry.size(), 2u);
        for (const auto* p : run.detector.registry.profiles())
            EXPECT_EQ(p->token_count(), v == Variant::no_decoupled_tokens ? 9 : 10);
        // 8 train records x 3 task kinds, batch 2, 1 epoch.
        for (const auto& [id, res] : run.stage2) EXPECT_EQ(res.log.steps.size(), 12u);
    }
}

TEST(Pipeline, FullFractionReproducesStandardRun) {
    const auto& f = shared();
    const auto cfg = tiny();
    const auto a = run_variant(f, Variant::full, cfg);
    const auto b = run_variant(f, Variant::full, cfg, 1.0);
    EXPECT_EQ(predictions_jsonl(a.predictions), predictions_jsonl(b.predictions));
    for (const auto& [id, res] : a.stage2) EXPECT_EQ(res.log.loss_trace(), b.stage2.at(id).log.loss_trace());
    EXPECT_EQ(checkpoint_digest(a.detector), checkpoint_digest(b.detector));
}

TEST(Pipeline, SweepRowsAndEmptyStratum) {
    const auto& f = shared();
    const auto cfg = tiny();
    const std::vector<double> ok = {0.5, 1.0};
    EXPECT_EQ(run_data_scale_sweep(ok, f, cfg).size(), 2u);
    const std::vector<double> too_small = {0.1};
    EXPECT_THROW(run_data_scale_sweep(too_small, f, cfg), EvaluationError);
    const std::vector<double> bad = {0.5, 0.0};
    EXPECT_THROW(run_data_scale_sweep(bad, f, cfg), ArgumentError);
}

TEST(Pipeline, DeterministicAcrossRebuilds) {
    const auto cfg = tiny();
    const Foundation again = build_foundation(cfg);
    EXPECT_EQ(again.pretrain_result.log.loss_trace(), shared().pretrain_result.log.loss_trace());
    EXPECT_EQ(checkpoint_digest(again.adapted), checkpoint_digest(shared().adapted));
    const auto a = run_variant(again, Variant::no_cot, cfg);
    const auto b = run_variant(shared(), Variant::no_cot, cfg);
    EXPECT_EQ(predictions_jsonl(a.predictions), predictions_jsonl(b.predictions));
    EXPECT_EQ(a.report.to_json(), b.report.to_json());
}

TEST(Pipeline, AblationMatchesVariantReport) {
    const auto& f = shared();
    const auto cfg = tiny();
    EXPECT_EQ(run_ablation(Variant::no_adapter, f, cfg).to_json(), run_variant(f, Variant::no_adapter, cfg).report.to_json());
}
