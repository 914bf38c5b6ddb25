#include "idprior/adapter/adapter.hpp"

#include "idprior/core/errors.hpp"

#include <cmath>

namespace idprior::adapter {

using backbone::LayeredFeatures;
using backbone::TokenSequence;

std::string_view to_string(Pooling p) { return p == Pooling::grid_average ? "grid_average" : "learned"; }

Pooling parse_pooling(std::string_view s) {
    if (s == "grid_average") return Pooling::grid_average;
    if (s == "learned") return Pooling::learned;
    throw ConfigError("unknown adapter pooling '" + std::string(s) + "'");
}

void AdapterConfig::validate(const backbone::ModelConfig& model) const {
    if (shallow_layer < 0 || shallow_layer >= model.encoder_layers)
        throw ConfigError("adapter shallow_layer must lie in [0, " + std::to_string(model.encoder_layers) + ")");
    if (n_adapter_tokens < 1) throw ConfigError("adapter needs at least one token");
    if (n_adapter_tokens > model.patch_count()) throw ConfigError("more adapter tokens than patches");
    if (pooling == Pooling::grid_average && model.patch_count() % n_adapter_tokens != 0)
        throw ConfigError("n_adapter_tokens must divide the patch count for grid_average pooling");
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
    j = {{"shallow_layer", c.shallow_layer},
         {"n_adapter_tokens", c.n_adapter_tokens},
         {"pooling", to_string(c.pooling)},
         {"zero_init", c.zero_init}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
    c.shallow_layer = j.at("shallow_layer").get<int>();
    c.n_adapter_tokens = j.at("n_adapter_tokens").get<int>();
    c.pooling = parse_pooling(j.at("pooling").get<std::string>());
    c.zero_init = j.value("zero_init", true);
}

Mat grid_pooling_matrix(int n_tokens, int patches_per_side) {
    const int n_patches = patches_per_side * patches_per_side;
    Mat pool = Mat::Zero(n_tokens, n_patches);
    const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_tokens))));
    if (g * g == n_tokens && patches_per_side % g == 0) {
        const int cell = patches_per_side / g;
        for (int py = 0; py < patches_per_side; ++py)
            for (int px = 0; px < patches_per_side; ++px)
                pool((py / cell) * g + px / cell, py * patches_per_side + px) = 1.0 / (cell * cell);
    } else {
        const int run = n_patches / n_tokens;
        for (int i = 0; i < n_tokens * run; ++i) pool(i / run, i) = 1.0 / run;
    }
    return pool;
}

template <class Self>
struct AdapterGraph {
    Self& a;
    ag::Tape& t;

    ag::Var p(const std::string& name) const { return t.param(a.params_.at(name)); }

    ag::Var forward(ag::Var shallow) const {
        if (shallow.rows() != a.patch_count_ || shallow.cols() != a.encoder_dim_)
            throw ShapeError("adapter expects a [patch_count x encoder_dim] feature grid");
        ag::Var pool = a.config_.pooling == Pooling::learned ? p("adapter.pool") : t.constant(a.fixed_pool_);
        ag::Var pooled = ag::matmul(t, pool, shallow);
        return ag::add_row(t, ag::matmul(t, pooled, p("adapter.proj.w")), p("adapter.proj.b"));
    }
};

DetectionAdapter::DetectionAdapter(const AdapterConfig& config, const backbone::ModelConfig& model, Rng& rng)
    : config_(config),
      patch_count_(model.patch_count()),
      encoder_dim_(model.encoder_dim),
      decoder_dim_(model.decoder_dim) {
    config_.validate(model);
    if (config_.pooling == Pooling::grid_average) {
        fixed_pool_ = grid_pooling_matrix(config_.n_adapter_tokens, model.patches_per_side());
    } else {
        // Learned pooling starts from consecutive-run averaging.
        Mat pool = Mat::Zero(config_.n_adapter_tokens, patch_count_);
        const int run = patch_count_ / config_.n_adapter_tokens;
        for (int i = 0; i < config_.n_adapter_tokens * run; ++i) pool(i / run, i) = 1.0 / run;
        params_.add("adapter.pool", std::move(pool));
    }
    Mat w = Mat::Zero(encoder_dim_, decoder_dim_);
    if (!config_.zero_init) {
        std::normal_distribution<double> n(0.0, 0.02);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = n(rng);
    }
    params_.add("adapter.proj.w", std::move(w));
    params_.add("adapter.proj.b", Mat::Zero(1, decoder_dim_));
}

const Mat& DetectionAdapter::shallow(const LayeredFeatures& features) const {
    if (config_.shallow_layer >= static_cast<int>(features.size()))
        throw ConfigError("feature stack has no layer " + std::to_string(config_.shallow_layer));
    return features.per_layer[static_cast<std::size_t>(config_.shallow_layer)];
}

TokenSequence DetectionAdapter::forward(const LayeredFeatures& features) const {
    ag::Tape t;
    return TokenSequence::from_embeddings(forward(t, t.constant(shallow(features))).value());
}

ag::Var DetectionAdapter::forward(ag::Tape& t, ag::Var shallow_features) {
    return AdapterGraph<DetectionAdapter>{*this, t}.forward(shallow_features);
}

ag::Var DetectionAdapter::forward(ag::Tape& t, ag::Var shallow_features) const {
    return AdapterGraph<const DetectionAdapter>{*this, t}.forward(shallow_features);
}

void DetectionAdapter::export_to(backbone::Checkpoint& ckpt) const {
    ckpt.header["adapter"] = config_;
    ckpt.put_store(params_);
}

DetectionAdapter DetectionAdapter::import_from(const backbone::Checkpoint& ckpt, const backbone::ModelConfig& model) {
    if (!ckpt.has_namespace("adapter.") || !ckpt.header.contains("adapter"))
        throw CheckpointError("checkpoint carries no adapter");
    AdapterConfig cfg;
    try {
        cfg = ckpt.header.at("adapter").get<AdapterConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad adapter header: ") + e.what());
    }
    Rng unused(0);
    DetectionAdapter a(cfg, model, unused);
    for (Parameter* p : a.params_.all()) {
        if (!ckpt.has(p->name)) throw CheckpointError("checkpoint lacks '" + p->name + "'");
        const Mat& v = ckpt.tensor(p->name);
        if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
            throw CheckpointError("shape mismatch for '" + p->name + "'");
        p->value = v;
    }
    return a;
}

TokenSequence integrate_tokens(const TokenSequence& standard, const TokenSequence& adapter) {
    if (adapter.size() == 0) return standard;
    if (standard.embeddings.rows() > 0 && adapter.embeddings.rows() > 0 &&
        standard.embeddings.cols() != adapter.embeddings.cols())
        throw ShapeError("standard and adapter tokens have different widths");
    TokenSequence out = standard;
    out.append(adapter);
    return out;
}

}  // namespace idprior::adapter
