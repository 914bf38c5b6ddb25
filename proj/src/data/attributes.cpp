#include "idprior/data/attributes.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>

namespace idprior::data {

namespace {

template <std::size_t N>
int lookup(const std::array<std::string_view, N>& words, const std::string& w) {
    auto it = std::find(words.begin(), words.end(), w);
    if (it == words.end()) throw ManifestError("unknown attribute value '" + w + "'");
    return static_cast<int>(it - words.begin());
}

template <std::size_t N>
std::string word(const std::array<std::string_view, N>& words, int i) {
    if (i < 0 || i >= static_cast<int>(N)) throw ManifestError("attribute index out of range");
    return std::string(words[static_cast<std::size_t>(i)]);
}

}  // namespace

int AppearanceSignature::distance(const AppearanceSignature& o) const {
    return (hair != o.hair) + (skin != o.skin) + (shape != o.shape) + (eyewear != o.eyewear) + (beard != o.beard);
}

bool BehaviorSignature::has_scene(int s) const { return std::find(scenes.begin(), scenes.end(), s) != scenes.end(); }

bool BehaviorSignature::has_clothing(int c) const {
    return std::find(clothing.begin(), clothing.end(), c) != clothing.end();
}

std::vector<std::string> appearance_words(const AppearanceSignature& a) {
    return {word(kHairWords, a.hair), word(kSkinWords, a.skin), word(kShapeWords, a.shape),
            word(kEyewearWords, a.eyewear), word(kBeardWords, a.beard)};
}

std::vector<std::string> behavior_words(const BehaviorSignature& b) {
    std::vector<std::string> out;
    for (int s : b.scenes) out.push_back(word(kSceneWords, s));
    for (int c : b.clothing) out.push_back(word(kClothingWords, c));
    return out;
}

bool appearance_matches(const RenderedAttributes& r, const AppearanceSignature& a) {
    return r.hair == a.hair && r.skin == a.skin && r.shape == a.shape && r.eyewear == a.eyewear && r.beard == a.beard;
}

bool behavior_matches(const RenderedAttributes& r, const BehaviorSignature& b) {
    return b.has_scene(r.scene) && b.has_clothing(r.clothing);
}

nlohmann::json attributes_to_json(const RenderedAttributes& a) {
    return {{"hair", word(kHairWords, a.hair)},          {"skin", word(kSkinWords, a.skin)},
            {"shape", word(kShapeWords, a.shape)},       {"eyewear", word(kEyewearWords, a.eyewear)},
            {"beard", word(kBeardWords, a.beard)},       {"scene", word(kSceneWords, a.scene)},
            {"clothing", word(kClothingWords, a.clothing)}};
}

RenderedAttributes attributes_from_json(const nlohmann::json& j) {
    RenderedAttributes a;
    a.hair = lookup(kHairWords, j.at("hair").get<std::string>());
    a.skin = lookup(kSkinWords, j.at("skin").get<std::string>());
    a.shape = lookup(kShapeWords, j.at("shape").get<std::string>());
    a.eyewear = lookup(kEyewearWords, j.at("eyewear").get<std::string>());
    a.beard = lookup(kBeardWords, j.at("beard").get<std::string>());
    a.scene = lookup(kSceneWords, j.at("scene").get<std::string>());
    a.clothing = lookup(kClothingWords, j.at("clothing").get<std::string>());
    return a;
}

nlohmann::json spec_to_json(const SyntheticIdentitySpec& s) {
    return {{"identity_id", s.identity_id},
            {"appearance", appearance_words(s.appearance)},
            {"behavior", behavior_words(s.behavior)},
            {"seed", s.seed}};
}

SyntheticIdentitySpec spec_from_json(const nlohmann::json& j) {
    try {
        SyntheticIdentitySpec s;
        s.identity_id = j.at("identity_id").get<std::string>();
        const auto a = j.at("appearance").get<std::vector<std::string>>();
        const auto b = j.at("behavior").get<std::vector<std::string>>();
        if (a.size() != 5 || b.size() != kTypicalScenes + kTypicalClothing)
            throw ManifestError("identity spec has wrong signature length");
        s.appearance = {lookup(kHairWords, a[0]), lookup(kSkinWords, a[1]), lookup(kShapeWords, a[2]),
                        lookup(kEyewearWords, a[3]), lookup(kBeardWords, a[4])};
        for (int i = 0; i < kTypicalScenes; ++i) s.behavior.scenes[static_cast<std::size_t>(i)] = lookup(kSceneWords, b[static_cast<std::size_t>(i)]);
        for (int i = 0; i < kTypicalClothing; ++i)
            s.behavior.clothing[static_cast<std::size_t>(i)] = lookup(kClothingWords, b[static_cast<std::size_t>(kTypicalScenes + i)]);
        s.seed = j.at("seed").get<std::uint64_t>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(std::string("malformed identity spec: ") + e.what());
    }
}

}  // namespace idprior::data
