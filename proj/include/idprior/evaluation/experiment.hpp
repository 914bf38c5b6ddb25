#pragma once

#include "idprior/adapter/adapter.hpp"
#include "idprior/backbone/config.hpp"
#include "idprior/data/generator.hpp"
#include "idprior/evaluation/metrics.hpp"
#include "idprior/training/trainer.hpp"

#include <array>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace idprior::evaluation {

enum class Variant { full, no_adapter, no_decoupled_tokens, no_cot };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::full, Variant::no_adapter,
                                                        Variant::no_decoupled_tokens, Variant::no_cot};

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ExperimentConfig {
    backbone::ModelConfig model;
    adapter::AdapterConfig adapter;
    training::TrainConfig train;
    data::DatasetConfig data;
    int n_soft = 4;
    PositiveClass positive_class = PositiveClass::forged;

    // Desk-scale benchmark: default model and corpus, longer stage 2.
    static ExperimentConfig benchmark();
};

using CacheMap = std::map<std::string, std::shared_ptr<const training::VisualCache>>;

// Frozen-encoder outputs of every record, keyed by sample id.
CacheMap encode_records(const training::Detector& d, std::span<const data::ManifestRecord> records);

// Stage 1 on identity-free generic records. Adds the adapter first (when
// missing) so the cached shallow features come from its layer.
training::StageResult run_stage1(training::Detector& d, std::span<const data::ManifestRecord> generic,
                                 const ExperimentConfig& cfg);

struct IdentityOptions {
    identity::TokenLayout layout = identity::TokenLayout::decoupled;
    bool cot = true;
};
IdentityOptions options_for(Variant v);

// Registers `identity_id` and trains its prior on `train` records.
training::StageResult train_identity(training::Detector& d, const std::string& identity_id,
                                     std::span<const data::ManifestRecord> train, const CacheMap& caches,
                                     const ExperimentConfig& cfg, const IdentityOptions& options);

// Forgery question with the identity's block, answered greedily.
PredictionRecord predict_record(const training::Detector& d, const std::string& identity_id,
                                const data::ManifestRecord& record, const training::VisualCache& cache,
                                int max_new_tokens);

// One detector holding every identity of a variant: starts from `base` and
// registers `ids` in order, each trained on its train-split records
// subsampled to `fraction`. `caches` must cover those records.
struct TrainedVariant {
    training::Detector detector;
    std::map<std::string, training::StageResult> stage2;
};
TrainedVariant train_variant(const training::Detector& base, std::span<const data::ManifestRecord> records,
                             std::span<const std::string> ids, const CacheMap& caches, const ExperimentConfig& cfg,
                             Variant variant, double fraction = 1.0);

std::vector<PredictionRecord> predict_identity(const training::Detector& d, const std::string& identity_id,
                                               std::span<const data::ManifestRecord> test, const CacheMap& caches,
                                               int max_new_tokens);

// Identity ids of `records` in order of first appearance.
std::vector<std::string> identity_ids(std::span<const data::ManifestRecord> records);

// floor(fraction * n) records per label, drawn by a seeded shuffle. Each
// record yields every task kind, so kinds stay stratified too. Fraction 1
// returns the input unchanged; a non-empty label group rounded to zero
// throws EvaluationError.
std::vector<data::ManifestRecord> subsample_stratified(std::span<const data::ManifestRecord> records, double fraction,
                                                       std::uint64_t seed);

// Generated corpus plus the two bases every variant starts from.
struct Foundation {
    data::SyntheticDataset dataset;
    training::Detector pretrained;  // backbone after the pretraining surrogate
    training::Detector adapted;     // pretrained plus the stage-1 adapter
    training::StageResult pretrain_result;
    training::StageResult stage1_result;
};

Foundation build_foundation(const ExperimentConfig& cfg);

struct VariantRun {
    Variant variant = Variant::full;
    double fraction = 1.0;
    MetricsReport report;
    std::vector<PredictionRecord> predictions;
    std::map<std::string, training::StageResult> stage2;  // per identity
    training::Detector detector;                           // with every identity registered
};

VariantRun run_variant(const Foundation& f, Variant variant, const ExperimentConfig& cfg, double fraction = 1.0);

MetricsReport run_ablation(Variant variant, const Foundation& f, const ExperimentConfig& cfg);

// Fractions must lie in (0, 1].
std::vector<MetricsReport> run_data_scale_sweep(std::span<const double> fractions, const Foundation& f,
                                                const ExperimentConfig& cfg);

}  // namespace idprior::evaluation
