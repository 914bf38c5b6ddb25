#include "idprior/backbone/config.hpp"

#include "idprior/core/errors.hpp"

namespace idprior::backbone {

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(msg);
    };
    need(image_side > 0 && patch_size > 0 && channels > 0, "image_side, patch_size and channels must be positive");
    need(image_side % patch_size == 0, "image_side must be divisible by patch_size");
    need(encoder_layers >= 1 && decoder_layers >= 1, "encoder and decoder need at least one layer");
    need(encoder_dim > 0 && decoder_dim > 0, "encoder_dim and decoder_dim must be positive");
    need(heads > 0 && encoder_dim % heads == 0 && decoder_dim % heads == 0, "model widths must divide into heads");
    need(base_vocab_size >= 64, "base_vocab_size must be at least 64");
    need(max_sequence > patch_count(), "max_sequence must exceed the visual token count");
    need(mlp_ratio >= 1, "mlp_ratio must be at least 1");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"image_side", c.image_side},
                       {"channels", c.channels},
                       {"patch_size", c.patch_size},
                       {"encoder_layers", c.encoder_layers},
                       {"encoder_dim", c.encoder_dim},
                       {"decoder_layers", c.decoder_layers},
                       {"decoder_dim", c.decoder_dim},
                       {"base_vocab_size", c.base_vocab_size},
                       {"max_sequence", c.max_sequence},
                       {"heads", c.heads},
                       {"mlp_ratio", c.mlp_ratio},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.image_side = j.at("image_side").get<int>();
    c.channels = j.at("channels").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.encoder_layers = j.at("encoder_layers").get<int>();
    c.encoder_dim = j.at("encoder_dim").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    c.decoder_dim = j.at("decoder_dim").get<int>();
    c.base_vocab_size = j.at("base_vocab_size").get<int>();
    c.max_sequence = j.at("max_sequence").get<int>();
    c.heads = j.at("heads").get<int>();
    c.mlp_ratio = j.at("mlp_ratio").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace idprior::backbone
