#include "idprior/data/manifest.hpp"

#include "idprior/core/errors.hpp"
#include "idprior/data/attributes.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace idprior::data {

using nlohmann::json;

std::string_view to_string(Label v) { return v == Label::real ? "real" : "forged"; }

std::string_view to_string(ForgeryType v) {
    switch (v) {
        case ForgeryType::none: return "none";
        case ForgeryType::deepfake: return "deepfake";
        case ForgeryType::aigc: return "aigc";
    }
    return "none";
}

std::string_view to_string(Split v) { return v == Split::train ? "train" : "test"; }

Label parse_label(std::string_view s) {
    if (s == "real") return Label::real;
    if (s == "forged") return Label::forged;
    throw ManifestError("unknown label '" + std::string(s) + "'");
}

ForgeryType parse_forgery_type(std::string_view s) {
    if (s == "none") return ForgeryType::none;
    if (s == "deepfake") return ForgeryType::deepfake;
    if (s == "aigc") return ForgeryType::aigc;
    throw ManifestError("unknown forgery_type '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ManifestError("unknown split '" + std::string(s) + "'");
}

bool AnomalyLabels::any() const { return count() > 0; }

int AnomalyLabels::count() const {
    int n = 0;
    for (bool b : values()) n += b ? 1 : 0;
    return n;
}

bool ManifestRecord::same_fields(const ManifestRecord& o) const {
    return sample_id == o.sample_id && identity_id == o.identity_id && label == o.label && method == o.method &&
           forgery_type == o.forgery_type && split == o.split && raster_path == o.raster_path && seed == o.seed &&
           annotations == o.annotations && description == o.description && generation == o.generation &&
           attributes == o.attributes;
}

Split split_for_method(std::string_view method, std::optional<Split> generation_tag) {
    if (std::find(kTrainMethods.begin(), kTrainMethods.end(), method) != kTrainMethods.end()) return Split::train;
    if (std::find(kTestMethods.begin(), kTestMethods.end(), method) != kTestMethods.end()) return Split::test;
    if (std::find(kSyntheticMethods.begin(), kSyntheticMethods.end(), method) != kSyntheticMethods.end()) {
        if (!generation_tag) throw ManifestError("synthetic method '" + std::string(method) + "' lacks a generation tag");
        return *generation_tag;
    }
    throw ManifestError("unknown manipulation method '" + std::string(method) + "'");
}

void validate_record(const ManifestRecord& r) {
    if (r.sample_id.empty() || r.identity_id.empty()) throw ManifestError("record needs sample_id and identity_id");
    if (r.label == Label::real) {
        if (r.method != "none" || r.forgery_type != ForgeryType::none)
            throw ManifestError(r.sample_id + ": real records carry no method or forgery type");
        if (r.annotations.any()) throw ManifestError(r.sample_id + ": real records carry no anomaly labels");
    } else {
        if (r.method.empty() || r.method == "none") throw ManifestError(r.sample_id + ": forged record without method");
        if (r.forgery_type == ForgeryType::none) throw ManifestError(r.sample_id + ": forged record without type");
        if (split_for_method(r.method, r.generation) != r.split)
            throw ManifestError(r.sample_id + ": split disagrees with method '" + r.method + "'");
    }
}

json record_to_json(const ManifestRecord& r) {
    json j;
    j["sample_id"] = r.sample_id;
    j["identity_id"] = r.identity_id;
    j["label"] = to_string(r.label);
    j["method"] = r.method;
    j["forgery_type"] = to_string(r.forgery_type);
    j["split"] = to_string(r.split);
    if (!r.raster_path.empty()) j["raster"] = r.raster_path;
    if (r.seed) j["seed"] = *r.seed;
    json a = json::object();
    const auto vals = r.annotations.values();
    for (std::size_t i = 0; i < vals.size(); ++i) a[std::string(AnomalyLabels::kNames[i])] = vals[i];
    j["annotations"] = a;
    if (!r.description.empty()) j["description"] = r.description;
    if (r.generation) j["generation"] = to_string(*r.generation);
    if (r.attributes) j["attributes"] = attributes_to_json(*r.attributes);
    return j;
}

ManifestRecord record_from_json(const json& j) {
    try {
        ManifestRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.identity_id = j.at("identity_id").get<std::string>();
        r.label = parse_label(j.at("label").get<std::string>());
        r.method = j.value("method", std::string("none"));
        r.forgery_type = parse_forgery_type(j.value("forgery_type", std::string("none")));
        r.split = parse_split(j.at("split").get<std::string>());
        r.raster_path = j.value("raster", std::string());
        if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("annotations")) {
            const json& a = j.at("annotations");
            r.annotations.hairstyle = a.value("hairstyle", false);
            r.annotations.skin_tone = a.value("skin_tone", false);
            r.annotations.eyewear = a.value("eyewear", false);
            r.annotations.beard = a.value("beard", false);
            r.annotations.clothing_style = a.value("clothing_style", false);
            r.annotations.face_shape = a.value("face_shape", false);
        }
        r.description = j.value("description", std::string());
        if (j.contains("generation")) r.generation = parse_split(j.at("generation").get<std::string>());
        if (j.contains("attributes")) r.attributes = attributes_from_json(j.at("attributes"));
        validate_record(r);
        return r;
    } catch (const json::exception& e) {
        throw ManifestError(std::string("malformed manifest record: ") + e.what());
    }
}

std::string serialize_manifest(std::span<const ManifestRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<ManifestRecord> parse_manifest(std::string_view text) {
    std::vector<ManifestRecord> out;
    std::size_t line_no = 0;
    std::size_t at = 0;
    while (at < text.size()) {
        std::size_t end = text.find('\n', at);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(at, end - at);
        at = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ManifestError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << serialize_manifest(records);
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str());
}

std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> split_manifest(
    std::span<const ManifestRecord> records) {
    std::pair<std::vector<ManifestRecord>, std::vector<ManifestRecord>> out;
    for (const auto& r : records) {
        Split s = r.split;
        if (r.label == Label::forged) {
            if (r.method.empty() || r.method == "none") throw ManifestError(r.sample_id + ": forged record without method");
            s = split_for_method(r.method, r.generation);
        }
        (s == Split::train ? out.first : out.second).push_back(r);
        (s == Split::train ? out.first : out.second).back().split = s;
    }
    return out;
}

void canonical_order(std::vector<ManifestRecord>& records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const ManifestRecord& a, const ManifestRecord& b) { return a.sample_id < b.sample_id; });
}

}  // namespace idprior::data
