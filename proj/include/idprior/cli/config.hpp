#pragma once

#include "idprior/evaluation/experiment.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace idprior::cli {

// Flat "section.key = value" settings. Sections: model, adapter, train,
// data, identity, eval. '#' starts a comment.
using Settings = std::map<std::string, std::string>;

// Throws ConfigError on malformed lines or duplicate keys.
Settings parse_settings(std::string_view text);
Settings read_settings(const std::filesystem::path& path);

// Unknown keys and values of the wrong type throw ConfigError.
void apply_setting(evaluation::ExperimentConfig& cfg, const std::string& key, const std::string& value);
void apply_settings(evaluation::ExperimentConfig& cfg, const Settings& settings);

// Every key of `cfg`, sorted, one "key = value" per line. Parsing the
// output back reproduces `cfg`.
std::string render_settings(const evaluation::ExperimentConfig& cfg);

// Command-scoped configuration resolved from defaults, then the config
// file, then flags.
struct RunConfig {
    evaluation::ExperimentConfig experiment = evaluation::ExperimentConfig::benchmark();
    std::filesystem::path out = "run";
    bool force = false;
    bool dry_run = false;
    evaluation::Variant variant = evaluation::Variant::full;
    std::vector<std::string> identities;  // empty = all
    std::vector<double> fractions = {0.05, 0.10, 0.25, 0.50, 0.75, 1.0};
    std::string sample;
};

std::vector<double> parse_fractions(std::string_view text);

}  // namespace idprior::cli
