#pragma once

#include "idprior/data/manifest.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace idprior::data {

struct Rgb {
    float r, g, b;
};

// Attribute tables. Each word is a lexicon entry of the backbone vocabulary.
inline constexpr std::array<std::string_view, 6> kHairWords = {"black_hair", "brown_hair", "blond_hair",
                                                                "red_hair",   "gray_hair",  "white_hair"};
inline constexpr std::array<std::string_view, 4> kSkinWords = {"pale_skin", "light_skin", "tan_skin", "dark_skin"};
inline constexpr std::array<std::string_view, 4> kShapeWords = {"round_face", "oval_face", "long_face",
                                                                 "square_face"};
inline constexpr std::array<std::string_view, 3> kEyewearWords = {"no_glasses", "glasses", "sunglasses"};
inline constexpr std::array<std::string_view, 2> kBeardWords = {"shaven", "bearded"};
inline constexpr std::array<std::string_view, 8> kSceneWords = {"studio", "office",  "beach",   "stage",
                                                                 "street", "forest", "stadium", "library"};
inline constexpr std::array<std::string_view, 6> kClothingWords = {"suit",    "tshirt",  "dress",
                                                                    "jacket", "uniform", "hoodie"};

inline constexpr std::array<Rgb, 6> kHairColors = {{{0.08f, 0.07f, 0.07f},
                                                    {0.42f, 0.25f, 0.12f},
                                                    {0.93f, 0.80f, 0.42f},
                                                    {0.78f, 0.22f, 0.08f},
                                                    {0.56f, 0.56f, 0.58f},
                                                    {0.97f, 0.97f, 0.95f}}};
inline constexpr std::array<Rgb, 4> kSkinColors = {
    {{0.99f, 0.89f, 0.82f}, {0.90f, 0.71f, 0.56f}, {0.70f, 0.50f, 0.33f}, {0.40f, 0.26f, 0.16f}}};
inline constexpr std::array<Rgb, 6> kClothingColors = {{{0.10f, 0.10f, 0.22f},
                                                        {0.96f, 0.96f, 0.96f},
                                                        {0.85f, 0.12f, 0.38f},
                                                        {0.50f, 0.32f, 0.12f},
                                                        {0.22f, 0.38f, 0.18f},
                                                        {0.55f, 0.58f, 0.80f}}};

inline constexpr int kTypicalScenes = 4;
inline constexpr int kTypicalClothing = 1;

struct AppearanceSignature {
    int hair = 0;
    int skin = 0;
    int shape = 0;
    int eyewear = 0;
    int beard = 0;

    int distance(const AppearanceSignature& o) const;
    bool operator==(const AppearanceSignature&) const = default;
};

struct BehaviorSignature {
    std::array<int, kTypicalScenes> scenes{};
    std::array<int, kTypicalClothing> clothing{};

    bool has_scene(int s) const;
    bool has_clothing(int c) const;
    bool operator==(const BehaviorSignature&) const = default;
};

struct SyntheticIdentitySpec {
    std::string identity_id;
    AppearanceSignature appearance;
    BehaviorSignature behavior;
    std::uint64_t seed = 0;

    bool operator==(const SyntheticIdentitySpec&) const = default;
};

// Word blocks describing an identity, aligned with the identifier blocks
// (identifier + soft tokens) used after personalization.
std::vector<std::string> appearance_words(const AppearanceSignature& a);
std::vector<std::string> behavior_words(const BehaviorSignature& b);

bool appearance_matches(const RenderedAttributes& r, const AppearanceSignature& a);
bool behavior_matches(const RenderedAttributes& r, const BehaviorSignature& b);

nlohmann::json attributes_to_json(const RenderedAttributes& a);
RenderedAttributes attributes_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SyntheticIdentitySpec& s);
SyntheticIdentitySpec spec_from_json(const nlohmann::json& j);

}  // namespace idprior::data
