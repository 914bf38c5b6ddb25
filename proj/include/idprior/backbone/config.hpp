#pragma once

#include <json.hpp>

#include <cstdint>

namespace idprior::backbone {

struct ModelConfig {
    int image_side = 32;
    int channels = 3;
    int patch_size = 8;
    int encoder_layers = 4;
    int encoder_dim = 64;
    int decoder_layers = 2;
    int decoder_dim = 64;
    int base_vocab_size = 64;
    int max_sequence = 256;
    int heads = 4;
    int mlp_ratio = 2;
    std::uint64_t seed = 0;

    int patches_per_side() const { return image_side / patch_size; }
    int patch_count() const { return patches_per_side() * patches_per_side(); }
    int patch_values() const { return patch_size * patch_size * channels; }

    // Throws ConfigError on any violated invariant.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace idprior::backbone
