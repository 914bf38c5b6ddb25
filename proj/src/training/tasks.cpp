#include "idprior/training/tasks.hpp"

#include "idprior/backbone/vocabulary.hpp"
#include "idprior/core/errors.hpp"
#include "idprior/data/generator.hpp"

#include <algorithm>

namespace idprior::training {

using backbone::kEosToken;
using data::ManifestRecord;

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::adapter_yes_no: return "adapter_yes_no";
        case TaskKind::appearance: return "appearance";
        case TaskKind::behavior: return "behavior";
        case TaskKind::forgery_cot: return "forgery_cot";
        case TaskKind::caption: return "caption";
    }
    return "unknown";
}

std::map<std::string, int> TaskBatch::mix() const {
    std::map<std::string, int> out;
    for (const auto& s : samples) ++out[std::string(to_string(s.kind))];
    return out;
}

std::string_view template_for(TaskKind kind, identity::TokenLayout layout) {
    const bool single = layout == identity::TokenLayout::single;
    switch (kind) {
        case TaskKind::appearance: return single ? kSingleAppearancePrompt : kAppearancePrompt;
        case TaskKind::behavior: return single ? kSingleBehaviorPrompt : kBehaviorPrompt;
        case TaskKind::forgery_cot: return single ? kSingleForgeryPrompt : kForgeryPrompt;
        case TaskKind::adapter_yes_no: return kAdapterPrompt;
        case TaskKind::caption: return kCaptionPrompt;
    }
    return kAdapterPrompt;
}

bool appearance_consistent(const ManifestRecord& r, const data::SyntheticIdentitySpec* spec) {
    if (spec && r.attributes) return data::appearance_matches(*r.attributes, spec->appearance);
    return !r.annotations.any_appearance();
}

bool behavior_consistent(const ManifestRecord& r, const data::SyntheticIdentitySpec* spec) {
    if (spec && r.attributes) return data::behavior_matches(*r.attributes, spec->behavior);
    return !r.annotations.clothing_style;
}

std::vector<int> yes_no_response(const backbone::Vocabulary& vocab, bool yes) {
    return {vocab.id(yes ? "Yes" : "No"), kEosToken};
}

std::vector<int> forgery_response(const backbone::Vocabulary& vocab, const ManifestRecord& r, bool cot) {
    if (!cot) return yes_no_response(vocab, r.label == data::Label::forged);
    const std::string text = r.description.empty() ? data::build_cot_description(r) : r.description;
    std::vector<int> ids = vocab.tokenize(text);
    ids.push_back(kEosToken);
    return ids;
}

namespace {

std::shared_ptr<const VisualCache> cache_for(const std::map<std::string, std::shared_ptr<const VisualCache>>& caches,
                                             const std::string& sample_id) {
    auto it = caches.find(sample_id);
    if (it == caches.end()) throw BatchError("no visual cache for sample '" + sample_id + "'");
    return it->second;
}

}  // namespace

std::vector<TaskSample> build_identity_tasks(std::span<const ManifestRecord> records,
                                             const identity::IdentityProfile& profile,
                                             const backbone::Vocabulary& vocab,
                                             const data::SyntheticIdentitySpec* spec,
                                             const std::map<std::string, std::shared_ptr<const VisualCache>>& caches,
                                             const IdentityTaskOptions& options) {
    const auto app_prompt = identity::expand_prompt(vocab, template_for(TaskKind::appearance, profile.layout), profile);
    const auto beh_prompt = identity::expand_prompt(vocab, template_for(TaskKind::behavior, profile.layout), profile);
    const auto cot_prompt = identity::expand_prompt(vocab, template_for(TaskKind::forgery_cot, profile.layout), profile);
    std::vector<TaskSample> out;
    for (const auto& r : records) {
        if (r.identity_id != profile.identity_id)
            throw BatchError("record '" + r.sample_id + "' belongs to another identity");
        TaskSample base;
        base.sample_id = r.sample_id;
        base.identity_id = r.identity_id;
        base.visual = cache_for(caches, r.sample_id);
        base.label = r.label == data::Label::forged ? 1 : 0;
        for (int k = 0; k < options.ratio_appearance; ++k) {
            TaskSample s = base;
            s.kind = TaskKind::appearance;
            s.prompt = app_prompt;
            s.response = yes_no_response(vocab, appearance_consistent(r, spec));
            out.push_back(std::move(s));
        }
        for (int k = 0; k < options.ratio_behavior; ++k) {
            TaskSample s = base;
            s.kind = TaskKind::behavior;
            s.prompt = beh_prompt;
            s.response = yes_no_response(vocab, behavior_consistent(r, spec));
            out.push_back(std::move(s));
        }
        for (int k = 0; k < options.ratio_forgery; ++k) {
            TaskSample s = base;
            s.kind = TaskKind::forgery_cot;
            s.prompt = cot_prompt;
            s.response = forgery_response(vocab, r, options.cot);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<TaskSample> build_adapter_tasks(std::span<const ManifestRecord> records,
                                            const backbone::Vocabulary& vocab,
                                            const std::map<std::string, std::shared_ptr<const VisualCache>>& caches) {
    const auto prompt = vocab.tokenize(kAdapterPrompt);
    std::vector<TaskSample> out;
    for (const auto& r : records) {
        TaskSample s;
        s.kind = TaskKind::adapter_yes_no;
        s.sample_id = r.sample_id;
        s.identity_id = r.identity_id;
        s.visual = cache_for(caches, r.sample_id);
        s.label = r.label == data::Label::forged ? 1 : 0;
        s.prompt = prompt;
        s.response = yes_no_response(vocab, s.label == 1);
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

int draw(Rng& rng, int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

int other_value(Rng& rng, int n, int current) {
    const int v = draw(rng, n - 1);
    return v >= current ? v + 1 : v;
}

// Changes one or two appearance attributes.
void perturb_appearance(data::AppearanceSignature& a, Rng& rng) {
    const int n = 1 + draw(rng, 2);
    for (int i = 0; i < n; ++i) {
        switch (draw(rng, 5)) {
            case 0: a.hair = other_value(rng, 6, a.hair); break;
            case 1: a.skin = other_value(rng, 4, a.skin); break;
            case 2: a.shape = other_value(rng, 4, a.shape); break;
            case 3: a.eyewear = other_value(rng, 3, a.eyewear); break;
            default: a.beard = 1 - a.beard; break;
        }
    }
}

// Each attribute independently with probability 3/10; keeps the claimed
// block from predicting the observed values.
void scramble_appearance(data::AppearanceSignature& a, Rng& rng) {
    if (draw(rng, 10) < 3) a.hair = other_value(rng, 6, a.hair);
    if (draw(rng, 10) < 3) a.skin = other_value(rng, 4, a.skin);
    if (draw(rng, 10) < 3) a.shape = other_value(rng, 4, a.shape);
    if (draw(rng, 10) < 3) a.eyewear = other_value(rng, 3, a.eyewear);
    if (draw(rng, 10) < 3) a.beard = 1 - a.beard;
}

// Swaps one typical scene or clothing item for one outside the set.
void perturb_behavior(data::BehaviorSignature& b, Rng& rng) {
    if (draw(rng, 2) == 0) {
        int v;
        do v = draw(rng, static_cast<int>(data::kSceneWords.size()));
        while (b.has_scene(v));
        b.scenes[static_cast<std::size_t>(draw(rng, data::kTypicalScenes))] = v;
        std::sort(b.scenes.begin(), b.scenes.end());
    } else {
        int v;
        do v = draw(rng, static_cast<int>(data::kClothingWords.size()));
        while (b.has_clothing(v));
        b.clothing[static_cast<std::size_t>(draw(rng, data::kTypicalClothing))] = v;
        std::sort(b.clothing.begin(), b.clothing.end());
    }
}

std::vector<int> words_to_ids(const backbone::Vocabulary& vocab, const std::vector<std::string>& words) {
    std::vector<int> out;
    for (const auto& w : words) out.push_back(vocab.id(w));
    return out;
}

std::vector<int> join(std::initializer_list<std::vector<int>> parts) {
    std::vector<int> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace

TaskSample pretraining_sample(const backbone::Vocabulary& vocab, Rng& rng, bool caption_only) {
    const data::SyntheticIdentitySpec spec = data::random_identity_spec("generic", rng);
    const int f = draw(rng, 4);
    const auto family = f < 2 ? data::ForgeryFamily::none
                              : (f == 2 ? data::ForgeryFamily::simswap : data::ForgeryFamily::photomaker);
    const ManifestRecord r = data::render_sample(spec, family, rng());
    const data::RenderedAttributes& attrs = *r.attributes;

    TaskSample s;
    s.sample_id = "pretrain";
    s.image = std::make_shared<const Raster>(r.raster);
    s.zero_slots = draw(rng, 2) == 0 ? 0 : 4;
    s.label = r.label == data::Label::forged ? 1 : 0;

    data::SyntheticIdentitySpec claimed = spec;
    const int roll = draw(rng, 20);
    s.kind = roll < 3 ? TaskKind::caption
                      : roll < 8 ? TaskKind::appearance
                                 : roll < 12 ? TaskKind::behavior : roll < 18 ? TaskKind::forgery_cot : TaskKind::adapter_yes_no;
    if (caption_only) s.kind = TaskKind::caption;
    if (draw(rng, 2) == 0) {
        if (s.kind == TaskKind::appearance) perturb_appearance(claimed.appearance, rng);
        else if (s.kind == TaskKind::behavior) perturb_behavior(claimed.behavior, rng);
        else if (s.kind == TaskKind::forgery_cot) {
            scramble_appearance(claimed.appearance, rng);
            if (draw(rng, 2) == 0) perturb_behavior(claimed.behavior, rng);
        }
    }
    const auto app = words_to_ids(vocab, data::appearance_words(claimed.appearance));
    const auto beh = words_to_ids(vocab, data::behavior_words(claimed.behavior));
    const int person = vocab.id("person");
    switch (s.kind) {
        case TaskKind::caption: {
            s.prompt = vocab.tokenize(kCaptionPrompt);
            auto words = data::appearance_words(data::AppearanceSignature{attrs.hair, attrs.skin, attrs.shape,
                                                                          attrs.eyewear, attrs.beard});
            words.push_back(std::string(data::kSceneWords[static_cast<std::size_t>(attrs.scene)]));
            words.push_back(std::string(data::kClothingWords[static_cast<std::size_t>(attrs.clothing)]));
            s.response = words_to_ids(vocab, words);
            s.response.push_back(kEosToken);
            break;
        }
        case TaskKind::appearance:
            s.prompt = join({{person}, app, vocab.tokenize("same appearance ?")});
            s.response = yes_no_response(vocab, data::appearance_matches(attrs, claimed.appearance));
            break;
        case TaskKind::behavior:
            s.prompt = join({{person}, beh, vocab.tokenize("same behavior ?")});
            s.response = yes_no_response(vocab, data::behavior_matches(attrs, claimed.behavior));
            break;
        case TaskKind::forgery_cot: {
            s.prompt = join({{person}, app, beh, vocab.tokenize("synthesis artifacts ?")});
            const data::AnomalyLabels anomalies = data::anomalies_against(attrs, claimed);
            const bool forged = r.label == data::Label::forged || anomalies.any();
            s.response = vocab.tokenize(
                data::build_cot_description(forged ? data::Label::forged : data::Label::real, anomalies, &attrs));
            s.response.push_back(kEosToken);
            break;
        }
        case TaskKind::adapter_yes_no:
            s.prompt = vocab.tokenize(kAdapterPrompt);
            s.response = yes_no_response(vocab, s.label == 1);
            break;
    }
    return s;
}

}  // namespace idprior::training
