#pragma once

#include "idprior/core/raster.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace idprior::data {

enum class Label { real, forged };
enum class ForgeryType { none, deepfake, aigc };
enum class Split { train, test };

std::string_view to_string(Label v);
std::string_view to_string(ForgeryType v);
std::string_view to_string(Split v);
Label parse_label(std::string_view s);
ForgeryType parse_forgery_type(std::string_view s);
Split parse_split(std::string_view s);

// Six semantic anomaly dimensions, multi-label.
struct AnomalyLabels {
    bool hairstyle = false;
    bool skin_tone = false;
    bool eyewear = false;
    bool beard = false;
    bool clothing_style = false;
    bool face_shape = false;

    static constexpr std::array<std::string_view, 6> kNames = {"hairstyle", "skin_tone",      "eyewear",
                                                               "beard",     "clothing_style", "face_shape"};

    std::array<bool, 6> values() const { return {hairstyle, skin_tone, eyewear, beard, clothing_style, face_shape}; }
    bool any() const;
    int count() const;
    // True when any appearance dimension (all but clothing_style) is set.
    bool any_appearance() const { return hairstyle || skin_tone || eyewear || beard || face_shape; }

    bool operator==(const AnomalyLabels&) const = default;
};

// Attribute values actually drawn into a raster, as lexicon indices within
// each attribute table (see attributes.hpp).
struct RenderedAttributes {
    int hair = 0;
    int skin = 0;
    int shape = 0;
    int eyewear = 0;
    int beard = 0;
    int scene = 0;
    int clothing = 0;

    bool operator==(const RenderedAttributes&) const = default;
};

struct ManifestRecord {
    std::string sample_id;
    std::string identity_id;
    Label label = Label::real;
    std::string method = "none";
    ForgeryType forgery_type = ForgeryType::none;
    Split split = Split::train;
    std::string raster_path;             // relative to the manifest directory
    std::optional<std::uint64_t> seed;   // generator seed
    AnomalyLabels annotations;
    std::string description;
    std::optional<Split> generation;     // family tag for synthetic_* methods
    std::optional<RenderedAttributes> attributes;

    Raster raster;  // in-memory only, never serialized

    // Equality over the serialized fields.
    bool same_fields(const ManifestRecord& other) const;
};

inline constexpr std::array<std::string_view, 2> kTrainMethods = {"SimSwap", "PhotoMaker"};
inline constexpr std::array<std::string_view, 3> kTestMethods = {"Roop", "StoryMaker", "PuLID"};
inline constexpr std::array<std::string_view, 2> kSyntheticMethods = {"synthetic_swap", "synthetic_context"};

// Checks the per-record invariants; throws ManifestError.
void validate_record(const ManifestRecord& record);

nlohmann::json record_to_json(const ManifestRecord& record);
ManifestRecord record_from_json(const nlohmann::json& j);

// One JSON object per line, in the given order.
std::string serialize_manifest(std::span<const ManifestRecord> records);
std::vector<ManifestRecord> parse_manifest(std::string_view text);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Forged records go to the split of their generation method; real records
// keep the split assigned when their identity's quotas were drawn.
std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> split_manifest(
    std::span<const ManifestRecord> records);

Split split_for_method(std::string_view method, std::optional<Split> generation_tag);

// Sorts by sample_id.
void canonical_order(std::vector<ManifestRecord>& records);

}  // namespace idprior::data
