#include "idprior/cli/config.hpp"

#include "idprior/core/errors.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace idprior::cli {

using evaluation::ExperimentConfig;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

json data_to_json(const data::DatasetConfig& d) {
    return {{"identities", d.identities},
            {"real_train", d.quota.real_train},
            {"forged_train", d.quota.forged_train},
            {"real_test", d.quota.real_test},
            {"forged_test", d.quota.forged_test},
            {"generic_identities", d.generic_identities},
            {"generic_real", d.generic_real},
            {"generic_forged", d.generic_forged},
            {"seed", d.seed}};
}

void data_from_json(const json& j, data::DatasetConfig& d) {
    d.identities = j.at("identities").get<int>();
    d.quota.real_train = j.at("real_train").get<int>();
    d.quota.forged_train = j.at("forged_train").get<int>();
    d.quota.real_test = j.at("real_test").get<int>();
    d.quota.forged_test = j.at("forged_test").get<int>();
    d.generic_identities = j.at("generic_identities").get<int>();
    d.generic_real = j.at("generic_real").get<int>();
    d.generic_forged = j.at("generic_forged").get<int>();
    d.seed = j.at("seed").get<std::uint64_t>();
}

json sections(const ExperimentConfig& c) {
    return {{"model", c.model},
            {"adapter", c.adapter},
            {"train", c.train},
            {"data", data_to_json(c.data)},
            {"identity", {{"n_soft", c.n_soft}}},
            {"eval", {{"positive_class", std::string(evaluation::to_string(c.positive_class))}}}};
}

void load_sections(const json& j, ExperimentConfig& c) {
    c.model = j.at("model").get<backbone::ModelConfig>();
    c.adapter = j.at("adapter").get<adapter::AdapterConfig>();
    c.train = j.at("train").get<training::TrainConfig>();
    data_from_json(j.at("data"), c.data);
    c.n_soft = j.at("identity").at("n_soft").get<int>();
    c.positive_class = evaluation::parse_positive_class(j.at("eval").at("positive_class").get<std::string>());
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && p == end;
}

// Typed after the current value so "1" stays an integer where one is expected.
json typed_value(const json& current, const std::string& key, const std::string& value) {
    auto bad = [&](std::string_view what) {
        return ConfigError("'" + key + "' expects " + std::string(what) + ", got '" + value + "'");
    };
    if (current.is_boolean()) {
        if (value == "true" || value == "1") return true;
        if (value == "false" || value == "0") return false;
        throw bad("true or false");
    }
    if (current.is_number_unsigned()) {
        std::uint64_t v = 0;
        if (!parse_number(value, v)) throw bad("a non-negative integer");
        return v;
    }
    if (current.is_number_integer()) {
        long long v = 0;
        if (!parse_number(value, v)) throw bad("an integer");
        return v;
    }
    if (current.is_number_float()) {
        double v = 0;
        if (!parse_number(value, v)) throw bad("a number");
        return v;
    }
    return value;
}

}  // namespace

Settings parse_settings(std::string_view text) {
    Settings out;
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(n) + ": expected 'key = value'");
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(n) + ": empty key");
        if (!out.emplace(key, value).second)
            throw ConfigError("line " + std::to_string(n) + ": duplicate key '" + key + "'");
    }
    return out;
}

Settings read_settings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_settings(ss.str());
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    apply_settings(cfg, Settings{{key, value}});
}

void apply_settings(ExperimentConfig& cfg, const Settings& settings) {
    json j = sections(cfg);
    for (const auto& [key, value] : settings) {
        const auto dot = key.find('.');
        if (dot == std::string::npos) throw ConfigError("key '" + key + "' has no section prefix");
        const std::string section = key.substr(0, dot), field = key.substr(dot + 1);
        if (!j.contains(section)) throw ConfigError("unknown section in '" + key + "'");
        if (!j[section].contains(field)) throw ConfigError("unknown key '" + key + "'");
        j[section][field] = typed_value(j[section][field], key, value);
    }
    ExperimentConfig next = cfg;
    try {
        load_sections(j, next);
    } catch (const json::exception& e) {
        throw ConfigError(e.what());
    }
    cfg = std::move(next);
}

std::string render_settings(const ExperimentConfig& cfg) {
    std::string out;
    const json all = sections(cfg);
    for (const auto& [section, fields] : all.items())
        for (const auto& [field, value] : fields.items())
            out += section + "." + field + " = " + (value.is_string() ? value.get<std::string>() : value.dump()) + "\n";
    return out;
}

std::vector<double> parse_fractions(std::string_view text) {
    std::vector<double> out;
    std::istringstream in{std::string(text)};
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        double v = 0;
        if (!parse_number(t, v)) throw ArgumentError("bad fraction '" + t + "'");
        if (!(v > 0.0) || v > 1.0) throw ArgumentError("fractions must lie in (0, 1]");
        out.push_back(v);
    }
    if (out.empty()) throw ArgumentError("no fractions given");
    return out;
}

}  // namespace idprior::cli
