#include "idprior/evaluation/experiment.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idprior::evaluation {

using data::Label;
using data::ManifestRecord;
using training::Detector;

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_adapter: return "no_adapter";
        case Variant::no_decoupled_tokens: return "no_decoupled_tokens";
        case Variant::no_cot: return "no_cot";
    }
    return "full";
}

Variant parse_variant(std::string_view s) {
    for (Variant v : kAllVariants)
        if (to_string(v) == s) return v;
    throw ArgumentError("unknown variant '" + std::string(s) + "'");
}

ExperimentConfig ExperimentConfig::benchmark() {
    ExperimentConfig c;
    c.train.epochs_stage2 = 15;
    c.train.learning_rate = 1e-2;
    c.train.stage1_steps = 600;
    return c;
}

CacheMap encode_records(const Detector& d, std::span<const ManifestRecord> records) {
    CacheMap out;
    for (const auto& r : records) {
        if (r.raster.pixels.empty()) throw PrerequisiteError("record '" + r.sample_id + "' has no raster loaded");
        out[r.sample_id] = std::make_shared<const training::VisualCache>(d.cache(r.raster));
    }
    return out;
}

training::StageResult run_stage1(Detector& d, std::span<const ManifestRecord> generic, const ExperimentConfig& cfg) {
    if (!d.adapter) {
        Rng init = make_rng(derive_seed(cfg.train.seed, stable_hash("adapter-init")));
        d.adapter.emplace(cfg.adapter, d.model.config(), init);
    }
    const CacheMap caches = encode_records(d, generic);
    const auto tasks = training::build_adapter_tasks(generic, d.model.vocabulary(), caches);
    return training::train_stage1(d, tasks, cfg.train, cfg.adapter);
}

IdentityOptions options_for(Variant v) {
    IdentityOptions o;
    if (v == Variant::no_decoupled_tokens) o.layout = identity::TokenLayout::single;
    if (v == Variant::no_cot) o.cot = false;
    return o;
}

training::StageResult train_identity(Detector& d, const std::string& identity_id, std::span<const ManifestRecord> train,
                                     const CacheMap& caches, const ExperimentConfig& cfg,
                                     const IdentityOptions& options) {
    Rng rng = make_rng(derive_seed(cfg.train.seed, stable_hash("register:" + identity_id)));
    const auto& profile = d.registry.register_identity(d.model, identity_id, cfg.n_soft, rng,
                                                       backbone::InitPolicy::mean_plus_noise, options.layout);
    training::IdentityTaskOptions topts;
    topts.cot = options.cot;
    topts.ratio_appearance = cfg.train.ratio_appearance;
    topts.ratio_behavior = cfg.train.ratio_behavior;
    topts.ratio_forgery = cfg.train.ratio_forgery;
    const auto tasks = training::build_identity_tasks(train, profile, d.model.vocabulary(), nullptr, caches, topts);
    return training::train_stage2(d, identity_id, tasks, cfg.train);
}

PredictionRecord predict_record(const Detector& d, const std::string& identity_id, const ManifestRecord& record,
                                const training::VisualCache& cache, int max_new_tokens) {
    const auto& profile = d.registry.profile(identity_id);
    const auto prompt = identity::expand_prompt(
        d.model.vocabulary(), training::template_for(training::TaskKind::forgery_cot, profile.layout), profile);
    PredictionRecord p;
    p.sample_id = record.sample_id;
    p.identity_id = identity_id;
    p.raw_text = d.respond_text(cache, prompt, max_new_tokens);
    p.verdict = binarize_response(p.raw_text).binary;
    p.truth = record.label == Label::forged ? Binary::forged : Binary::real;
    return p;
}

TrainedVariant train_variant(const Detector& base, std::span<const ManifestRecord> records,
                             std::span<const std::string> ids, const CacheMap& caches, const ExperimentConfig& cfg,
                             Variant variant, double fraction) {
    TrainedVariant out{base, {}};
    for (const auto& id : ids) {
        std::vector<ManifestRecord> train;
        for (const auto& r : records)
            if (r.identity_id == id && r.split == data::Split::train) train.push_back(r);
        if (train.empty()) throw PrerequisiteError("identity '" + id + "' has no training records");
        const auto picked =
            subsample_stratified(train, fraction, derive_seed(cfg.train.seed, stable_hash("subsample:" + id)));
        out.stage2[id] = train_identity(out.detector, id, picked, caches, cfg, options_for(variant));
    }
    return out;
}

std::vector<PredictionRecord> predict_identity(const Detector& d, const std::string& identity_id,
                                               std::span<const ManifestRecord> test, const CacheMap& caches,
                                               int max_new_tokens) {
    std::vector<PredictionRecord> out;
    for (const auto& r : test) {
        const auto it = caches.find(r.sample_id);
        if (it == caches.end()) throw PrerequisiteError("no encoded features for '" + r.sample_id + "'");
        out.push_back(predict_record(d, identity_id, r, *it->second, max_new_tokens));
    }
    return out;
}

std::vector<std::string> identity_ids(std::span<const ManifestRecord> records) {
    std::vector<std::string> out;
    for (const auto& r : records)
        if (std::find(out.begin(), out.end(), r.identity_id) == out.end()) out.push_back(r.identity_id);
    return out;
}

std::vector<ManifestRecord> subsample_stratified(std::span<const ManifestRecord> records, double fraction,
                                                 std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0) throw ArgumentError("fractions must lie in (0, 1]");
    if (fraction == 1.0) return {records.begin(), records.end()};
    std::vector<ManifestRecord> out;
    Rng rng = make_rng(seed);
    for (Label label : {Label::real, Label::forged}) {
        std::vector<std::size_t> group;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (records[i].label == label) group.push_back(i);
        if (group.empty()) continue;
        const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(group.size())));
        if (keep == 0)
            throw EvaluationError("fraction " + std::to_string(fraction) + " leaves no " +
                                  std::string(data::to_string(label)) + " records");
        std::shuffle(group.begin(), group.end(), rng);
        group.resize(keep);
        std::sort(group.begin(), group.end());
        for (std::size_t i : group) out.push_back(records[i]);
    }
    return out;
}

Foundation build_foundation(const ExperimentConfig& cfg) {
    cfg.train.validate();
    cfg.adapter.validate(cfg.model);
    Foundation f{data::generate_dataset(cfg.data), Detector(cfg.model), Detector(cfg.model), {}, {}};
    f.pretrain_result = training::pretrain_backbone(f.pretrained, cfg.train);
    f.adapted = f.pretrained;
    f.stage1_result = run_stage1(f.adapted, f.dataset.generic_records, cfg);
    return f;
}

VariantRun run_variant(const Foundation& f, Variant variant, const ExperimentConfig& cfg, double fraction) {
    const Detector& base = variant == Variant::no_adapter ? f.pretrained : f.adapted;
    const CacheMap caches = encode_records(base, f.dataset.target_records);
    const auto ids = identity_ids(f.dataset.target_records);
    auto trained = train_variant(base, f.dataset.target_records, ids, caches, cfg, variant, fraction);
    VariantRun run{variant, fraction, {}, {}, std::move(trained.stage2), std::move(trained.detector)};
    std::vector<Prediction> pairs;
    for (const auto& id : ids) {
        std::vector<ManifestRecord> test;
        for (const auto& r : f.dataset.target_records)
            if (r.identity_id == id && r.split == data::Split::test) test.push_back(r);
        for (auto& p : predict_identity(run.detector, id, test, caches, cfg.train.max_new_tokens)) {
            pairs.push_back({p.identity_id, p.verdict, p.truth});
            run.predictions.push_back(std::move(p));
        }
    }
    run.report = compute_metrics(pairs, cfg.positive_class);
    return run;
}

MetricsReport run_ablation(Variant variant, const Foundation& f, const ExperimentConfig& cfg) {
    return run_variant(f, variant, cfg).report;
}

std::vector<MetricsReport> run_data_scale_sweep(std::span<const double> fractions, const Foundation& f,
                                                const ExperimentConfig& cfg) {
    for (double x : fractions)
        if (!(x > 0.0) || x > 1.0) throw ArgumentError("fractions must lie in (0, 1]");
    std::vector<MetricsReport> out;
    for (double x : fractions) out.push_back(run_variant(f, Variant::full, cfg, x).report);
    return out;
}

}  // namespace idprior::evaluation
