#include "idprior/training/losses.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>

namespace idprior::training {

namespace {

enum Term { kAdapterTerm = 0, kAppearanceTerm = 1, kBehaviorTerm = 2 };

Term route(TaskKind k) {
    switch (k) {
        case TaskKind::appearance: return kAppearanceTerm;
        case TaskKind::behavior: return kBehaviorTerm;
        default: return kAdapterTerm;
    }
}

bool contains_block(std::span<const int> ids, const std::vector<int>& block) {
    if (block.empty()) return false;
    return std::search(ids.begin(), ids.end(), block.begin(), block.end()) != ids.end();
}

void require_kind(const TaskBatch& batch, std::initializer_list<TaskKind> kinds, const char* what) {
    if (batch.empty()) throw DegenerateBatchError(std::string(what) + " loss on an empty batch");
    for (const auto& s : batch.samples)
        if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end())
            throw BatchError(std::string(what) + " loss got a " + std::string(to_string(s.kind)) + " sample");
}

}  // namespace

LossGraph build_loss(ag::Tape& t, Detector& d, const TaskBatch& batch, double lambda1, double lambda2) {
    std::vector<ag::Var> sums[3];
    int counts[3] = {0, 0, 0};
    for (const auto& s : batch.samples) {
        const auto parts = d.sample_loss(t, s);
        const Term term = route(s.kind);
        sums[term].push_back(parts.sum);
        counts[term] += parts.count;
    }
    LossGraph g;
    const double lambdas[3] = {1.0, lambda1, lambda2};
    double values[3] = {0.0, 0.0, 0.0};
    std::vector<ag::Var> parts;
    std::vector<double> weights;
    for (int k = 0; k < 3; ++k) {
        if (counts[k] == 0) continue;
        for (const ag::Var& v : sums[k]) {
            parts.push_back(v);
            weights.push_back(lambdas[k] / counts[k]);
            values[k] += v.scalar();
        }
        values[k] /= counts[k];
    }
    g.terms.adapter = values[0];
    g.terms.appearance = values[1];
    g.terms.behavior = values[2];
    g.terms.adapter_tokens = counts[0];
    g.terms.appearance_tokens = counts[1];
    g.terms.behavior_tokens = counts[2];
    if (!parts.empty()) g.total = ag::sum_scalars(t, parts, weights);
    return g;
}

LossGraph build_token_mean_loss(ag::Tape& t, Detector& d, const TaskBatch& batch) {
    std::vector<ag::Var> parts;
    int count = 0;
    double sum = 0.0;
    for (const auto& s : batch.samples) {
        const auto p = d.sample_loss(t, s);
        parts.push_back(p.sum);
        count += p.count;
        sum += p.sum.scalar();
    }
    LossGraph g;
    if (count == 0) return g;
    g.terms.adapter = sum / count;
    g.terms.adapter_tokens = count;
    g.total = ag::sum_scalars(t, parts, std::vector<double>(parts.size(), 1.0 / count));
    return g;
}

LossTerms loss_terms(Detector& d, const TaskBatch& batch) {
    ag::Tape t;
    return build_loss(t, d, batch, 1.0, 1.0).terms;
}

double loss_adapter(Detector& d, const TaskBatch& batch) {
    require_kind(batch, {TaskKind::adapter_yes_no, TaskKind::forgery_cot}, "adapter");
    return loss_terms(d, batch).adapter;
}

double loss_appearance(Detector& d, const TaskBatch& batch, const identity::IdentityProfile& profile) {
    require_kind(batch, {TaskKind::appearance}, "appearance");
    const auto block = profile.block_a();
    for (const auto& s : batch.samples)
        if (!contains_block(s.prompt, block))
            throw TemplateError("appearance prompt of '" + s.sample_id + "' lacks the expanded identifier block");
    return loss_terms(d, batch).appearance;
}

double loss_behavior(Detector& d, const TaskBatch& batch, const identity::IdentityProfile& profile) {
    require_kind(batch, {TaskKind::behavior}, "behavior");
    // The single layout carries behavior in the one shared block.
    const auto block = profile.layout == identity::TokenLayout::single ? profile.block_a() : profile.block_b();
    for (const auto& s : batch.samples)
        if (!contains_block(s.prompt, block))
            throw TemplateError("behavior prompt of '" + s.sample_id + "' lacks the expanded identifier block");
    return loss_terms(d, batch).behavior;
}

double loss_total(Detector& d, const TaskBatch& batch, double lambda1, double lambda2) {
    return loss_terms(d, batch).total(lambda1, lambda2);
}

}  // namespace idprior::training
