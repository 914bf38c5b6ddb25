#pragma once

#include "idprior/backbone/vocabulary.hpp"
#include "idprior/core/raster.hpp"
#include "idprior/core/rng.hpp"
#include "idprior/core/tensor.hpp"
#include "idprior/data/attributes.hpp"
#include "idprior/data/manifest.hpp"
#include "idprior/identity/registry.hpp"

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace idprior::training {

// caption is only used by the backbone pretraining surrogate.
enum class TaskKind { adapter_yes_no, appearance, behavior, forgery_cot, caption };

std::string_view to_string(TaskKind k);

// Frozen-encoder outputs for one image: projected visual tokens and the
// shallow feature grid the adapter reads.
struct VisualCache {
    Mat standard;
    Mat shallow;
};

struct TaskSample {
    TaskKind kind = TaskKind::adapter_yes_no;
    std::string sample_id;
    std::string identity_id;
    std::shared_ptr<const VisualCache> visual;  // stages 1/2 and inference
    std::shared_ptr<const Raster> image;        // pretraining (encoder in the graph)
    int zero_slots = 0;                         // pretraining: zero rows after the visual tokens
    std::vector<int> prompt;                    // text after the visual block
    std::vector<int> response;                  // teacher-forced target ids
    int label = 0;                              // 1 = forged, 0 = real
};

struct TaskBatch {
    std::vector<TaskSample> samples;

    std::map<std::string, int> mix() const;
    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

// Prompt templates; identity placeholders are expanded per profile.
inline constexpr std::string_view kAppearancePrompt = "person <id_a> same appearance ?";
inline constexpr std::string_view kBehaviorPrompt = "person <id_b> same behavior ?";
inline constexpr std::string_view kForgeryPrompt = "person <id_a> <id_b> synthesis artifacts ?";
inline constexpr std::string_view kSingleAppearancePrompt = "person <id> same appearance ?";
inline constexpr std::string_view kSingleBehaviorPrompt = "person <id> same behavior ?";
inline constexpr std::string_view kSingleForgeryPrompt = "person <id> synthesis artifacts ?";
inline constexpr std::string_view kAdapterPrompt = "synthesis artifacts ?";
inline constexpr std::string_view kCaptionPrompt = "describe :";

std::string_view template_for(TaskKind kind, identity::TokenLayout layout);

// Ground truth of the two recognition questions for a record of the
// identity described by `spec` (annotations alone when spec is null).
bool appearance_consistent(const data::ManifestRecord& r, const data::SyntheticIdentitySpec* spec);
bool behavior_consistent(const data::ManifestRecord& r, const data::SyntheticIdentitySpec* spec);

// Response ids, eos-terminated. With `cot` false the forgery answer is the
// verdict keyword alone.
std::vector<int> yes_no_response(const backbone::Vocabulary& vocab, bool yes);
std::vector<int> forgery_response(const backbone::Vocabulary& vocab, const data::ManifestRecord& r, bool cot);

struct IdentityTaskOptions {
    bool cot = true;
    // Per-record task kinds, drawn in this ratio (appearance:behavior:forgery_cot).
    int ratio_appearance = 1;
    int ratio_behavior = 1;
    int ratio_forgery = 1;
};

// Stage-2 tasks for one identity: each record yields ratio_* copies of each
// task kind. `caches` maps sample_id to frozen-encoder outputs.
std::vector<TaskSample> build_identity_tasks(
    std::span<const data::ManifestRecord> records, const identity::IdentityProfile& profile,
    const backbone::Vocabulary& vocab, const data::SyntheticIdentitySpec* spec,
    const std::map<std::string, std::shared_ptr<const VisualCache>>& caches, const IdentityTaskOptions& options);

// Identity-free Yes/No artifact questions for stage 1.
std::vector<TaskSample> build_adapter_tasks(std::span<const data::ManifestRecord> records,
                                            const backbone::Vocabulary& vocab,
                                            const std::map<std::string, std::shared_ptr<const VisualCache>>& caches);

// One pretraining sample: a freshly rendered avatar of a random signature
// (authentic or train-family forgery) with a randomly chosen task. Identity
// blocks are replaced by attribute words of a claimed signature that matches
// the drawn one or differs from it in a few attributes.
TaskSample pretraining_sample(const backbone::Vocabulary& vocab, Rng& rng, bool caption_only = false);

}  // namespace idprior::training
