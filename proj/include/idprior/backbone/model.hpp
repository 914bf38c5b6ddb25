#pragma once

#include "idprior/backbone/checkpoint.hpp"
#include "idprior/backbone/config.hpp"
#include "idprior/backbone/vocabulary.hpp"
#include "idprior/core/autograd.hpp"
#include "idprior/core/raster.hpp"
#include "idprior/core/rng.hpp"
#include "idprior/core/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace idprior::backbone {

enum class InitPolicy { mean_plus_noise, zeros };

// Hidden states of the vision encoder. Index 0 is the patch embedding,
// index k the output of encoder layer k.
struct LayeredFeatures {
    std::vector<Mat> per_layer;

    std::size_t size() const { return per_layer.size(); }
    const Mat& deepest() const { return per_layer.back(); }
};

// Token ids plus embedding rows for the positions holding kImageToken.
// Row i of `embeddings` feeds the i-th image-token position.
struct TokenSequence {
    std::vector<int> ids;
    Mat embeddings;

    std::size_t size() const { return ids.size(); }
    int embedded_count() const;

    static TokenSequence from_ids(std::vector<int> ids);
    static TokenSequence from_embeddings(Mat rows);
    TokenSequence& append(const TokenSequence& tail);
    TokenSequence& append(std::span<const int> tail_ids);
};

// Rows appended to the input and output embedding tables.
struct VocabExtension {
    int index = 0;
    int start_id = 0;
    int count = 0;
    std::string input_param;
    std::string output_param;

    int end_id() const { return start_id + count; }
};

class VisionLanguageModel {
public:
    explicit VisionLanguageModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    Vocabulary& vocabulary() { return vocab_; }
    ParameterStore& parameters() { return params_; }
    const ParameterStore& parameters() const { return params_; }
    const std::vector<VocabExtension>& extensions() const { return extensions_; }
    int vocab_size() const;

    LayeredFeatures encode_image(const Raster& image) const;
    TokenSequence project_visual(const LayeredFeatures& features) const;
    VocabExtension extend_vocabulary(int n_new, InitPolicy policy, Rng& rng);
    TokenSequence decode_greedy(const TokenSequence& context, int max_new) const;
    // Mean cross-entropy over masked positions; target_ids[t] is what
    // position t should predict.
    double forward_loss(const TokenSequence& tokens, std::span<const int> target_ids,
                        const std::vector<bool>& loss_mask) const;
    // Raw logits for every position, [length x vocab_size].
    Mat logits(const TokenSequence& tokens) const;

    // Graph builders. Non-const overloads bind parameters with gradients
    // (for the trainable ones); const overloads never record gradients.
    std::vector<ag::Var> encode(ag::Tape& t, const Raster& image);
    std::vector<ag::Var> encode(ag::Tape& t, const Raster& image) const;
    ag::Var project(ag::Tape& t, ag::Var deepest);
    ag::Var project(ag::Tape& t, ag::Var deepest) const;
    // `embedded` supplies one row per kImageToken in `ids` (may be empty).
    ag::Var decoder_hidden(ag::Tape& t, std::span<const int> ids, ag::Var embedded);
    ag::Var decoder_hidden(ag::Tape& t, std::span<const int> ids, ag::Var embedded) const;
    ag::Var output_logits(ag::Tape& t, ag::Var hidden, std::span<const int> rows);
    ag::Var output_logits(ag::Tape& t, ag::Var hidden, std::span<const int> rows) const;

    struct LossParts {
        ag::Var sum;
        int count = 0;
    };
    LossParts masked_cross_entropy(ag::Tape& t, std::span<const int> ids, ag::Var embedded,
                                   std::span<const int> target_ids, const std::vector<bool>& loss_mask);
    LossParts masked_cross_entropy(ag::Tape& t, std::span<const int> ids, ag::Var embedded,
                                   std::span<const int> target_ids, const std::vector<bool>& loss_mask) const;

    // Writes "backbone." and "vocab." tensors and the model header fields.
    void export_to(Checkpoint& ckpt) const;
    static VisionLanguageModel import_from(const Checkpoint& ckpt);

    // Patch rows of an image, [patch_count x patch_values].
    Mat patchify(const Raster& image) const;

private:
    template <class Self>
    friend struct ModelGraph;

    void init_parameters();
    void check_tokens(std::span<const int> ids) const;

    ModelConfig config_;
    Vocabulary vocab_;
    ParameterStore params_;
    std::vector<VocabExtension> extensions_;
};

}  // namespace idprior::backbone
