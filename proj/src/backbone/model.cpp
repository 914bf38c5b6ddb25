#include "idprior/backbone/model.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>

namespace idprior::backbone {

namespace {

std::string layer_prefix(const char* stack, int layer) {
    return std::string("backbone.") + stack + ".L" + std::to_string(layer) + ".";
}

std::string ext_name(int index, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "vocab.ext%03d.", index);
    return std::string(buf) + kind;
}

Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

}  // namespace

int TokenSequence::embedded_count() const {
    int n = 0;
    for (int id : ids) n += id == kImageToken ? 1 : 0;
    return n;
}

TokenSequence TokenSequence::from_ids(std::vector<int> ids) {
    TokenSequence s;
    s.ids = std::move(ids);
    return s;
}

TokenSequence TokenSequence::from_embeddings(Mat rows) {
    TokenSequence s;
    s.ids.assign(static_cast<std::size_t>(rows.rows()), kImageToken);
    s.embeddings = std::move(rows);
    return s;
}

TokenSequence& TokenSequence::append(const TokenSequence& tail) {
    if (tail.embeddings.rows() > 0) {
        if (embeddings.rows() > 0 && embeddings.cols() != tail.embeddings.cols())
            throw ShapeError("token embedding widths differ");
        Mat joined(embeddings.rows() + tail.embeddings.rows(), tail.embeddings.cols());
        if (embeddings.rows() > 0) joined.topRows(embeddings.rows()) = embeddings;
        joined.bottomRows(tail.embeddings.rows()) = tail.embeddings;
        embeddings = std::move(joined);
    }
    ids.insert(ids.end(), tail.ids.begin(), tail.ids.end());
    return *this;
}

TokenSequence& TokenSequence::append(std::span<const int> tail_ids) {
    for (int id : tail_ids)
        if (id == kImageToken) throw ShapeError("appended ids may not contain image placeholders");
    ids.insert(ids.end(), tail_ids.begin(), tail_ids.end());
    return *this;
}

// Shared graph construction for const and mutable models. `Self` decides
// whether parameter leaves are bound with gradients.
template <class Self>
struct ModelGraph {
    Self& m;
    ag::Tape& t;

    ag::Var p(const std::string& name) const { return t.param(m.params_.at(name)); }

    ag::Var linear(ag::Var x, const std::string& pre) const {
        return ag::add_row(t, ag::matmul(t, x, p(pre + "w")), p(pre + "b"));
    }

    ag::Var block(ag::Var x, const std::string& pre, bool causal) const {
        ag::Var h = ag::layer_norm(t, x, p(pre + "ln1.g"), p(pre + "ln1.b"));
        h = ag::attention(t, linear(h, pre + "attn.qkv."), m.config_.heads, causal);
        x = ag::add(t, x, linear(h, pre + "attn.out."));
        h = ag::layer_norm(t, x, p(pre + "ln2.g"), p(pre + "ln2.b"));
        h = ag::gelu(t, linear(h, pre + "mlp.fc1."));
        return ag::add(t, x, linear(h, pre + "mlp.fc2."));
    }

    std::vector<ag::Var> encode(const Raster& image) const {
        std::vector<ag::Var> layers;
        ag::Var x = t.constant(m.patchify(image));
        x = ag::add(t, linear(x, "backbone.enc.patch."), p("backbone.enc.pos"));
        layers.push_back(x);
        for (int l = 0; l < m.config_.encoder_layers; ++l) {
            x = block(x, layer_prefix("enc", l), false);
            layers.push_back(x);
        }
        return layers;
    }

    ag::Var project(ag::Var deepest) const {
        if (deepest.rows() != m.config_.patch_count() || deepest.cols() != m.config_.encoder_dim)
            throw ShapeError("project: features do not match the encoder shape");
        ag::Var h = ag::layer_norm(t, deepest, p("backbone.proj.ln.g"), p("backbone.proj.ln.b"));
        return linear(h, "backbone.proj.");
    }

    ag::Var input_table(ag::Var embedded) const {
        std::vector<ag::Var> parts{p("backbone.dec.tok")};
        for (const auto& ext : m.extensions_) parts.push_back(p(ext.input_param));
        if (embedded) parts.push_back(embedded);
        return ag::concat_rows(t, parts);
    }

    ag::Var output_table() const {
        std::vector<ag::Var> parts{p("backbone.dec.out")};
        for (const auto& ext : m.extensions_) parts.push_back(p(ext.output_param));
        return ag::concat_rows(t, parts);
    }

    ag::Var hidden(std::span<const int> ids, ag::Var embedded) const {
        m.check_tokens(ids);
        const int vocab = m.vocab_size();
        const int want = static_cast<int>(std::count(ids.begin(), ids.end(), kImageToken));
        const int have = embedded ? static_cast<int>(embedded.rows()) : 0;
        if (want != have) throw ShapeError("embedding rows do not match image-token positions");
        if (embedded && embedded.cols() != m.config_.decoder_dim)
            throw ShapeError("embedding width differs from decoder_dim");

        std::vector<int> rows(ids.size());
        std::vector<int> positions(ids.size());
        int next_embedded = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            rows[i] = ids[i] == kImageToken ? vocab + next_embedded++ : ids[i];
            positions[i] = static_cast<int>(i);
        }
        ag::Var x = ag::gather_rows(t, input_table(embedded), rows);
        x = ag::add(t, x, ag::gather_rows(t, p("backbone.dec.pos"), positions));
        for (int l = 0; l < m.config_.decoder_layers; ++l) x = block(x, layer_prefix("dec", l), true);
        return ag::layer_norm(t, x, p("backbone.dec.ln_f.g"), p("backbone.dec.ln_f.b"));
    }

    ag::Var logits(ag::Var hidden_states, std::span<const int> rows) const {
        return ag::matmul_nt(t, ag::gather_rows(t, hidden_states, rows), output_table());
    }

    typename VisionLanguageModel::LossParts loss(std::span<const int> ids, ag::Var embedded,
                                                 std::span<const int> targets, const std::vector<bool>& mask) const {
        if (targets.size() != ids.size() || mask.size() != ids.size())
            throw ShapeError("target and mask lengths must equal the token length");
        std::vector<int> rows;
        std::vector<int> picked;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!mask[i]) continue;
            if (targets[i] < 0 || targets[i] >= m.vocab_size()) throw ShapeError("target id out of vocabulary");
            rows.push_back(static_cast<int>(i));
            picked.push_back(targets[i]);
        }
        if (rows.empty()) throw DegenerateBatchError("loss mask selects no positions");
        ag::Var h = hidden(ids, embedded);
        return {ag::cross_entropy_sum(t, logits(h, rows), picked), static_cast<int>(rows.size())};
    }
};

VisionLanguageModel::VisionLanguageModel(const ModelConfig& config) : config_(config), vocab_(config.base_vocab_size) {
    config_.validate();
    init_parameters();
}

void VisionLanguageModel::init_parameters() {
    Rng rng = make_rng(config_.seed);
    // Output rows start small; everything else at unit-variance scale. With
    // the small scale everywhere attention starts uniform and token
    // comparisons sit on a long plateau.
    constexpr double kStd = 0.02;
    auto add_linear = [&](const std::string& pre, int in, int out) {
        params_.add(pre + "w", normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
        params_.add(pre + "b", Mat::Zero(1, out));
    };
    auto add_norm = [&](const std::string& pre, int dim) {
        params_.add(pre + "g", Mat::Ones(1, dim));
        params_.add(pre + "b", Mat::Zero(1, dim));
    };
    auto add_block = [&](const std::string& pre, int dim) {
        add_norm(pre + "ln1.", dim);
        add_linear(pre + "attn.qkv.", dim, 3 * dim);
        add_linear(pre + "attn.out.", dim, dim);
        add_norm(pre + "ln2.", dim);
        add_linear(pre + "mlp.fc1.", dim, config_.mlp_ratio * dim);
        add_linear(pre + "mlp.fc2.", config_.mlp_ratio * dim, dim);
    };

    const int de = config_.encoder_dim;
    const int dd = config_.decoder_dim;
    add_linear("backbone.enc.patch.", config_.patch_values(), de);
    params_.add("backbone.enc.pos", normal_matrix(config_.patch_count(), de, 1.0 / std::sqrt(static_cast<double>(de)), rng));
    for (int l = 0; l < config_.encoder_layers; ++l) add_block(layer_prefix("enc", l), de);
    add_norm("backbone.proj.ln.", de);
    add_linear("backbone.proj.", de, dd);
    const double emb = 1.0 / std::sqrt(static_cast<double>(dd));
    params_.add("backbone.dec.tok", normal_matrix(config_.base_vocab_size, dd, emb, rng));
    params_.add("backbone.dec.pos", normal_matrix(config_.max_sequence, dd, emb, rng));
    for (int l = 0; l < config_.decoder_layers; ++l) add_block(layer_prefix("dec", l), dd);
    add_norm("backbone.dec.ln_f.", dd);
    params_.add("backbone.dec.out", normal_matrix(config_.base_vocab_size, dd, kStd, rng));
}

int VisionLanguageModel::vocab_size() const {
    int n = config_.base_vocab_size;
    for (const auto& ext : extensions_) n += ext.count;
    return n;
}

void VisionLanguageModel::check_tokens(std::span<const int> ids) const {
    if (static_cast<int>(ids.size()) > config_.max_sequence)
        throw SequenceLengthError("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_sequence " +
                                  std::to_string(config_.max_sequence));
    const int vocab = vocab_size();
    for (int id : ids)
        if (id < 0 || id >= vocab) throw ShapeError("token id " + std::to_string(id) + " outside vocabulary");
}

Mat VisionLanguageModel::patchify(const Raster& image) const {
    if (image.height != config_.image_side || image.width != config_.image_side || image.channels != config_.channels)
        throw ConfigError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) + "x" +
                          std::to_string(image.channels) + ", model expects " + std::to_string(config_.image_side) +
                          "x" + std::to_string(config_.image_side) + "x" + std::to_string(config_.channels));
    const int ps = config_.patch_size;
    const int side = config_.patches_per_side();
    Mat patches(config_.patch_count(), config_.patch_values());
    for (int gy = 0; gy < side; ++gy) {
        for (int gx = 0; gx < side; ++gx) {
            const int row = gy * side + gx;
            int col = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    for (int c = 0; c < config_.channels; ++c) {
                        const float v = image.at(gy * ps + y, gx * ps + x, c);
                        if (!std::isfinite(v)) throw ConfigError("image contains non-finite values");
                        patches(row, col++) = 2.0 * (static_cast<double>(v) - 0.5);
                    }
        }
    }
    return patches;
}

std::vector<ag::Var> VisionLanguageModel::encode(ag::Tape& t, const Raster& image) {
    return ModelGraph<VisionLanguageModel>{*this, t}.encode(image);
}
std::vector<ag::Var> VisionLanguageModel::encode(ag::Tape& t, const Raster& image) const {
    return ModelGraph<const VisionLanguageModel>{*this, t}.encode(image);
}
ag::Var VisionLanguageModel::project(ag::Tape& t, ag::Var deepest) {
    return ModelGraph<VisionLanguageModel>{*this, t}.project(deepest);
}
ag::Var VisionLanguageModel::project(ag::Tape& t, ag::Var deepest) const {
    return ModelGraph<const VisionLanguageModel>{*this, t}.project(deepest);
}
ag::Var VisionLanguageModel::decoder_hidden(ag::Tape& t, std::span<const int> ids, ag::Var embedded) {
    return ModelGraph<VisionLanguageModel>{*this, t}.hidden(ids, embedded);
}
ag::Var VisionLanguageModel::decoder_hidden(ag::Tape& t, std::span<const int> ids, ag::Var embedded) const {
    return ModelGraph<const VisionLanguageModel>{*this, t}.hidden(ids, embedded);
}
ag::Var VisionLanguageModel::output_logits(ag::Tape& t, ag::Var hidden, std::span<const int> rows) {
    return ModelGraph<VisionLanguageModel>{*this, t}.logits(hidden, rows);
}
ag::Var VisionLanguageModel::output_logits(ag::Tape& t, ag::Var hidden, std::span<const int> rows) const {
    return ModelGraph<const VisionLanguageModel>{*this, t}.logits(hidden, rows);
}
VisionLanguageModel::LossParts VisionLanguageModel::masked_cross_entropy(ag::Tape& t, std::span<const int> ids,
                                                                         ag::Var embedded,
                                                                         std::span<const int> target_ids,
                                                                         const std::vector<bool>& loss_mask) {
    return ModelGraph<VisionLanguageModel>{*this, t}.loss(ids, embedded, target_ids, loss_mask);
}
VisionLanguageModel::LossParts VisionLanguageModel::masked_cross_entropy(ag::Tape& t, std::span<const int> ids,
                                                                         ag::Var embedded,
                                                                         std::span<const int> target_ids,
                                                                         const std::vector<bool>& loss_mask) const {
    return ModelGraph<const VisionLanguageModel>{*this, t}.loss(ids, embedded, target_ids, loss_mask);
}

LayeredFeatures VisionLanguageModel::encode_image(const Raster& image) const {
    ag::Tape t;
    LayeredFeatures out;
    for (const ag::Var& v : encode(t, image)) out.per_layer.push_back(v.value());
    return out;
}

TokenSequence VisionLanguageModel::project_visual(const LayeredFeatures& features) const {
    if (features.size() != static_cast<std::size_t>(config_.encoder_layers + 1))
        throw ShapeError("layered features must hold encoder_layers + 1 grids");
    ag::Tape t;
    return TokenSequence::from_embeddings(project(t, t.constant(features.deepest())).value());
}

VocabExtension VisionLanguageModel::extend_vocabulary(int n_new, InitPolicy policy, Rng& rng) {
    if (n_new <= 0) throw ArgumentError("extend_vocabulary needs n_new >= 1");
    VocabExtension ext;
    ext.index = static_cast<int>(extensions_.size());
    ext.start_id = vocab_size();
    ext.count = n_new;
    ext.input_param = ext_name(ext.index, "input");
    ext.output_param = ext_name(ext.index, "output");

    const int dd = config_.decoder_dim;
    Mat input = Mat::Zero(n_new, dd);
    Mat output = Mat::Zero(n_new, dd);
    if (policy == InitPolicy::mean_plus_noise) {
        constexpr double kNoise = 0.02;
        const Eigen::RowVectorXd in_mean = params_.at("backbone.dec.tok").value.colwise().mean();
        const Eigen::RowVectorXd out_mean = params_.at("backbone.dec.out").value.colwise().mean();
        input = normal_matrix(n_new, dd, kNoise, rng);
        input.rowwise() += in_mean;
        output = normal_matrix(n_new, dd, kNoise, rng);
        output.rowwise() += out_mean;
    }
    params_.add(ext.input_param, std::move(input));
    params_.add(ext.output_param, std::move(output));
    extensions_.push_back(ext);
    vocab_.grow_to(vocab_size());
    return ext;
}

Mat VisionLanguageModel::logits(const TokenSequence& tokens) const {
    ag::Tape t;
    ag::Var embedded = tokens.embeddings.rows() > 0 ? t.constant(tokens.embeddings) : ag::Var();
    ag::Var h = decoder_hidden(t, tokens.ids, embedded);
    std::vector<int> rows(tokens.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
    return output_logits(t, h, rows).value();
}

double VisionLanguageModel::forward_loss(const TokenSequence& tokens, std::span<const int> target_ids,
                                         const std::vector<bool>& loss_mask) const {
    ag::Tape t;
    ag::Var embedded = tokens.embeddings.rows() > 0 ? t.constant(tokens.embeddings) : ag::Var();
    const LossParts parts = masked_cross_entropy(t, tokens.ids, embedded, target_ids, loss_mask);
    return parts.sum.scalar() / parts.count;
}

TokenSequence VisionLanguageModel::decode_greedy(const TokenSequence& context, int max_new) const {
    if (max_new < 0) throw ArgumentError("max_new must be non-negative");
    if (static_cast<int>(context.size()) + max_new > config_.max_sequence)
        throw SequenceLengthError("context of " + std::to_string(context.size()) + " plus " + std::to_string(max_new) +
                                  " new tokens exceeds max_sequence " + std::to_string(config_.max_sequence));
    if (context.size() == 0 && max_new > 0) throw ArgumentError("decode_greedy needs a non-empty context");
    TokenSequence out = context;
    if (max_new == 0) return out;
    check_tokens(out.ids);
    if (std::count(out.ids.begin(), out.ids.end(), kImageToken) != out.embeddings.rows())
        throw ShapeError("embedding rows do not match image-token positions");
    if (out.embeddings.rows() > 0 && out.embeddings.cols() != config_.decoder_dim)
        throw ShapeError("embedding width differs from decoder_dim");

    // Inference-only pass with per-layer key/value caches; no tape.
    const int d = config_.decoder_dim;
    const int heads = config_.heads;
    const int hd = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    const int vocab = vocab_size();
    auto val = [&](const std::string& name) -> const Mat& { return params_.at(name).value; };
    auto norm = [&](const Mat& x, const std::string& pre) {
        const auto g = val(pre + "g").row(0).array();
        const auto b = val(pre + "b").row(0).array();
        Mat y(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double mean = x.row(r).mean();
            const double var = (x.row(r).array() - mean).square().mean();
            y.row(r) = ((x.row(r).array() - mean) / std::sqrt(var + 1e-5)) * g + b;
        }
        return y;
    };
    auto linear = [&](const Mat& x, const std::string& pre) {
        Mat y = x * val(pre + "w");
        y.rowwise() += val(pre + "b").row(0);
        return y;
    };
    auto input_row = [&](int id) -> Eigen::RowVectorXd {
        if (id < config_.base_vocab_size) return val("backbone.dec.tok").row(id);
        for (const auto& ext : extensions_)
            if (id < ext.start_id + ext.count) return val(ext.input_param).row(id - ext.start_id);
        throw ShapeError("token id out of vocabulary");
    };
    Mat table_out(vocab, d);
    {
        Eigen::Index at = 0;
        const Mat& base = val("backbone.dec.out");
        table_out.topRows(base.rows()) = base;
        at = base.rows();
        for (const auto& ext : extensions_) {
            const Mat& e = val(ext.output_param);
            table_out.middleRows(at, e.rows()) = e;
            at += e.rows();
        }
    }

    const int capacity = static_cast<int>(out.size()) + max_new;
    std::vector<Mat> keys(static_cast<std::size_t>(config_.decoder_layers), Mat(capacity, d));
    std::vector<Mat> values = keys;
    int cached = 0;
    int next_embedded = 0;
    // Feeds ids[from, end) and returns next-token logits of the last one.
    auto feed = [&](std::size_t from) {
        const auto n = static_cast<Eigen::Index>(out.size() - from);
        Mat x(n, d);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int id = out.ids[from + static_cast<std::size_t>(i)];
            x.row(i) = id == kImageToken ? Eigen::RowVectorXd(out.embeddings.row(next_embedded++)) : input_row(id);
            x.row(i) += val("backbone.dec.pos").row(cached + i);
        }
        for (int l = 0; l < config_.decoder_layers; ++l) {
            const std::string pre = layer_prefix("dec", l);
            const Mat qkv = linear(norm(x, pre + "ln1."), pre + "attn.qkv.");
            Mat& K = keys[static_cast<std::size_t>(l)];
            Mat& V = values[static_cast<std::size_t>(l)];
            K.middleRows(cached, n) = qkv.middleCols(d, d);
            V.middleRows(cached, n) = qkv.middleCols(2 * d, d);
            Mat att(n, d);
            for (int h = 0; h < heads; ++h) {
                const auto q = qkv.middleCols(h * hd, hd);
                const auto k = K.block(0, h * hd, cached + n, hd);
                const auto v = V.block(0, h * hd, cached + n, hd);
                Mat s = (q * k.transpose()) * inv_sqrt;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const Eigen::Index visible = cached + i + 1;
                    const double mx = s.row(i).head(visible).maxCoeff();
                    s.row(i).head(visible) = (s.row(i).head(visible).array() - mx).exp().matrix();
                    s.row(i).head(visible) /= s.row(i).head(visible).sum();
                    s.row(i).tail(s.cols() - visible).setZero();
                }
                att.middleCols(h * hd, hd).noalias() = s * v;
            }
            x += linear(att, pre + "attn.out.");
            Mat hmid = linear(norm(x, pre + "ln2."), pre + "mlp.fc1.");
            hmid = hmid.unaryExpr([](double z) { return ag::gelu_value(z); });
            x += linear(hmid, pre + "mlp.fc2.");
        }
        cached += static_cast<int>(n);
        const Mat last = norm(x.bottomRows(1), "backbone.dec.ln_f.");
        return Eigen::RowVectorXd(last * table_out.transpose());
    };

    Eigen::RowVectorXd z = feed(0);
    for (int step = 0; step < max_new; ++step) {
        Eigen::Index best = 0;
        z(kImageToken) = -std::numeric_limits<double>::infinity();  // placeholder has no embedding
        z.maxCoeff(&best);
        out.ids.push_back(static_cast<int>(best));
        if (best == kEosToken || step + 1 == max_new) break;
        z = feed(out.size() - 1);
    }
    return out;
}

void VisionLanguageModel::export_to(Checkpoint& ckpt) const {
    ckpt.header["config"] = config_;
    ckpt.header["vocab_size"] = vocab_size();
    ckpt.header["seed"] = config_.seed;
    nlohmann::json exts = nlohmann::json::array();
    for (const auto& e : extensions_) exts.push_back({{"index", e.index}, {"start_id", e.start_id}, {"count", e.count}});
    ckpt.header["extensions"] = exts;
    nlohmann::json words = nlohmann::json::array();
    for (int id = config_.base_vocab_size; id < vocab_size(); ++id) words.push_back(vocab_.word(id));
    ckpt.header["extension_words"] = words;
    ckpt.put_store(params_);
}

VisionLanguageModel VisionLanguageModel::import_from(const Checkpoint& ckpt) {
    if (!ckpt.header.contains("config")) throw CheckpointError("checkpoint header lacks a model config");
    VisionLanguageModel m(ckpt.header.at("config").get<ModelConfig>());
    for (const auto& e : ckpt.header.at("extensions")) {
        VocabExtension ext;
        ext.index = e.at("index").get<int>();
        ext.start_id = e.at("start_id").get<int>();
        ext.count = e.at("count").get<int>();
        ext.input_param = ext_name(ext.index, "input");
        ext.output_param = ext_name(ext.index, "output");
        if (ext.start_id != m.vocab_size()) throw CheckpointError("extension registry is not contiguous");
        m.params_.add(ext.input_param, Mat::Zero(ext.count, m.config_.decoder_dim));
        m.params_.add(ext.output_param, Mat::Zero(ext.count, m.config_.decoder_dim));
        m.extensions_.push_back(ext);
    }
    m.vocab_.grow_to(m.vocab_size());
    for (Parameter* p : m.params_.all()) {
        const Mat& src = ckpt.tensor(p->name);
        if (src.rows() != p->value.rows() || src.cols() != p->value.cols())
            throw CheckpointError("tensor '" + p->name + "' has the wrong shape");
        p->value = src;
    }
    const auto& words = ckpt.header.at("extension_words");
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string w = words[i].get<std::string>();
        if (w.rfind("<new_", 0) != 0) m.vocab_.add_alias(m.config_.base_vocab_size + static_cast<int>(i), w);
    }
    if (ckpt.header.at("vocab_size").get<int>() != m.vocab_size())
        throw CheckpointError("vocabulary size in header disagrees with the extension registry");
    return m;
}

}  // namespace idprior::backbone
