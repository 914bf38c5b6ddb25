#pragma once

#include "idprior/adapter/adapter.hpp"
#include "idprior/backbone/model.hpp"
#include "idprior/identity/registry.hpp"
#include "idprior/training/tasks.hpp"

#include <optional>

namespace idprior::training {

// Backbone plus optional detection adapter plus identity registry.
struct Detector {
    backbone::VisionLanguageModel model;
    std::optional<adapter::DetectionAdapter> adapter;
    identity::IdentityRegistry registry;

    explicit Detector(const backbone::ModelConfig& config) : model(config) {}
    Detector(backbone::VisionLanguageModel m) : model(std::move(m)) {}

    // Number of embedded rows between <bos> and the prompt.
    int visual_slots() const;

    VisualCache cache(const Raster& image) const;

    // <bos>, visual tokens (plus adapter tokens), then `prompt`.
    backbone::TokenSequence context(const VisualCache& visual, std::span<const int> prompt) const;

    // Greedy response ids, eos excluded.
    std::vector<int> respond(const VisualCache& visual, std::span<const int> prompt, int max_new) const;
    std::string respond_text(const VisualCache& visual, std::span<const int> prompt, int max_new) const;

    // Summed cross-entropy over the response tokens of one sample. The
    // encoder runs inside the graph for samples that carry an image.
    backbone::VisionLanguageModel::LossParts sample_loss(ag::Tape& t, const TaskSample& s);

    // Every parameter (backbone, vocab extensions, adapter).
    std::vector<Parameter*> all_parameters();
    std::vector<const Parameter*> all_parameters() const;
    void set_all_trainable(bool trainable);

    void export_to(backbone::Checkpoint& ckpt) const;
    // Loads backbone, extensions and (when present) the adapter.
    static Detector import_from(const backbone::Checkpoint& ckpt);
};

// Teacher-forcing layout: ids are the context followed by the response minus
// its last token; positions from the last context token on predict the
// response.
struct Assembled {
    std::vector<int> ids;
    std::vector<int> targets;
    std::vector<bool> mask;
};
Assembled assemble(int visual_slots, std::span<const int> prompt, std::span<const int> response);

}  // namespace idprior::training
