#pragma once

#include "idprior/backbone/checkpoint.hpp"
#include "idprior/backbone/config.hpp"
#include "idprior/backbone/model.hpp"
#include "idprior/core/autograd.hpp"
#include "idprior/core/rng.hpp"

#include <json.hpp>

namespace idprior::adapter {

enum class Pooling { grid_average, learned };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view s);

struct AdapterConfig {
    int shallow_layer = 1;
    int n_adapter_tokens = 4;
    Pooling pooling = Pooling::grid_average;
    // Zero projection: adapter tokens start as all-zero rows.
    bool zero_init = true;

    void validate(const backbone::ModelConfig& model) const;
    bool operator==(const AdapterConfig&) const = default;
};

void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

// Fixed averaging weights [n_tokens x patch_count]. Square token counts pool
// square blocks of the patch grid; other counts pool runs of consecutive
// patches in raster order.
Mat grid_pooling_matrix(int n_tokens, int patches_per_side);

// Pools the shallow feature grid to a few tokens and maps them into the
// decoder embedding space with one affine layer.
class DetectionAdapter {
public:
    DetectionAdapter(const AdapterConfig& config, const backbone::ModelConfig& model, Rng& rng);

    const AdapterConfig& config() const { return config_; }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }
    std::int64_t scalar_count() const { return params_.scalar_count(); }

    // Reads per_layer[shallow_layer] only.
    backbone::TokenSequence forward(const backbone::LayeredFeatures& features) const;
    const Mat& shallow(const backbone::LayeredFeatures& features) const;

    ag::Var forward(ag::Tape& t, ag::Var shallow_features);
    ag::Var forward(ag::Tape& t, ag::Var shallow_features) const;

    // Writes the "adapter." tensors and the "adapter" header entry.
    void export_to(backbone::Checkpoint& ckpt) const;
    // Throws CheckpointError when the namespace is absent.
    static DetectionAdapter import_from(const backbone::Checkpoint& ckpt, const backbone::ModelConfig& model);

private:
    template <class Self>
    friend struct AdapterGraph;

    AdapterConfig config_;
    int patch_count_ = 0;
    int encoder_dim_ = 0;
    int decoder_dim_ = 0;
    Mat fixed_pool_;
    ParameterStore params_;
};

// Standard tokens followed by adapter tokens.
backbone::TokenSequence integrate_tokens(const backbone::TokenSequence& standard,
                                         const backbone::TokenSequence& adapter);

}  // namespace idprior::adapter
