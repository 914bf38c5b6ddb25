#include "idprior/training/detector.hpp"

#include "idprior/core/errors.hpp"

#include <array>

namespace idprior::training {

using backbone::kBosToken;
using backbone::kEosToken;
using backbone::kImageToken;
using backbone::TokenSequence;

Assembled assemble(int visual_slots, std::span<const int> prompt, std::span<const int> response) {
    if (response.empty()) throw BatchError("task sample has an empty response");
    Assembled a;
    a.ids.push_back(kBosToken);
    a.ids.insert(a.ids.end(), static_cast<std::size_t>(visual_slots), kImageToken);
    a.ids.insert(a.ids.end(), prompt.begin(), prompt.end());
    const std::size_t context = a.ids.size();
    a.ids.insert(a.ids.end(), response.begin(), response.end() - 1);
    a.targets.assign(a.ids.size(), backbone::kPadToken);
    a.mask.assign(a.ids.size(), false);
    for (std::size_t k = 0; k < response.size(); ++k) {
        a.targets[context - 1 + k] = response[k];
        a.mask[context - 1 + k] = true;
    }
    return a;
}

int Detector::visual_slots() const {
    return model.config().patch_count() + (adapter ? adapter->config().n_adapter_tokens : 0);
}

VisualCache Detector::cache(const Raster& image) const {
    const auto feats = model.encode_image(image);
    VisualCache c;
    c.standard = model.project_visual(feats).embeddings;
    c.shallow = adapter ? adapter->shallow(feats) : feats.per_layer[1 % feats.size()];
    return c;
}

TokenSequence Detector::context(const VisualCache& visual, std::span<const int> prompt) const {
    TokenSequence seq = TokenSequence::from_ids({kBosToken});
    TokenSequence vis = TokenSequence::from_embeddings(visual.standard);
    if (adapter) {
        ag::Tape t;
        vis = adapter::integrate_tokens(
            vis, TokenSequence::from_embeddings(adapter->forward(t, t.constant(visual.shallow)).value()));
    }
    seq.append(vis);
    seq.append(prompt);
    return seq;
}

std::vector<int> Detector::respond(const VisualCache& visual, std::span<const int> prompt, int max_new) const {
    const TokenSequence ctx = context(visual, prompt);
    const TokenSequence out = model.decode_greedy(ctx, max_new);
    std::vector<int> ids(out.ids.begin() + static_cast<std::ptrdiff_t>(ctx.size()), out.ids.end());
    if (!ids.empty() && ids.back() == kEosToken) ids.pop_back();
    return ids;
}

std::string Detector::respond_text(const VisualCache& visual, std::span<const int> prompt, int max_new) const {
    return model.vocabulary().detokenize(respond(visual, prompt, max_new));
}

backbone::VisionLanguageModel::LossParts Detector::sample_loss(ag::Tape& t, const TaskSample& s) {
    ag::Var rows;
    int slots = 0;
    if (s.image) {
        auto feats = model.encode(t, *s.image);
        rows = model.project(t, feats.back());
        slots = model.config().patch_count();
        if (s.zero_slots > 0) {
            rows = ag::concat_rows(t, std::array<ag::Var, 2>{rows, t.constant(Mat::Zero(s.zero_slots, model.config().decoder_dim))});
            slots += s.zero_slots;
        }
    } else {
        if (!s.visual) throw BatchError("task sample '" + s.sample_id + "' has neither image nor visual cache");
        rows = t.constant(s.visual->standard);
        slots = model.config().patch_count();
        if (adapter) {
            rows = ag::concat_rows(t, std::array<ag::Var, 2>{rows, adapter->forward(t, t.constant(s.visual->shallow))});
            slots += adapter->config().n_adapter_tokens;
        }
    }
    const Assembled a = assemble(slots, s.prompt, s.response);
    if (static_cast<int>(a.ids.size()) > model.config().max_sequence)
        throw SequenceLengthError("task sample '" + s.sample_id + "' exceeds max_sequence");
    return model.masked_cross_entropy(t, a.ids, rows, a.targets, a.mask);
}

std::vector<Parameter*> Detector::all_parameters() {
    auto out = model.parameters().all();
    if (adapter)
        for (Parameter* p : adapter->parameters().all()) out.push_back(p);
    return out;
}

std::vector<const Parameter*> Detector::all_parameters() const {
    auto out = model.parameters().all();
    if (adapter)
        for (const Parameter* p : adapter->parameters().all()) out.push_back(p);
    return out;
}

void Detector::set_all_trainable(bool trainable) {
    for (Parameter* p : all_parameters()) p->trainable = trainable;
}

void Detector::export_to(backbone::Checkpoint& ckpt) const {
    model.export_to(ckpt);
    if (adapter) adapter->export_to(ckpt);
}

Detector Detector::import_from(const backbone::Checkpoint& ckpt) {
    Detector d(backbone::VisionLanguageModel::import_from(ckpt));
    if (ckpt.has_namespace("adapter.")) d.adapter = adapter::DetectionAdapter::import_from(ckpt, d.model.config());
    return d;
}

}  // namespace idprior::training
