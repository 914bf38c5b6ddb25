#include "idprior/backbone/vocabulary.hpp"

#include "idprior/core/errors.hpp"

#include <array>

namespace idprior::backbone {

namespace {

constexpr std::array<std::string_view, 64> kLexicon = {
    "<pad>", "<bos>", "<eos>", "<img>", "Yes", "No",
    // hair colour
    "black_hair", "brown_hair", "blond_hair", "red_hair", "gray_hair", "white_hair",
    // skin tone
    "pale_skin", "light_skin", "tan_skin", "dark_skin",
    // face shape
    "round_face", "oval_face", "long_face", "square_face",
    // eyewear
    "no_glasses", "glasses", "sunglasses",
    // beard
    "shaven", "bearded",
    // scenes
    "studio", "office", "beach", "stage", "street", "forest", "stadium", "library",
    // clothing
    "suit", "tshirt", "dress", "jacket", "uniform", "hoodie",
    // question words
    "describe", "same", "appearance", "behavior", "synthesis", "artifacts", "?", ":",
    // anomaly dimensions
    "hairstyle", "skin_tone", "eyewear", "beard", "clothing_style", "face_shape",
    // explanation words
    "inconsistent", "consistent", "all", "traits", "so", "answer", ".", "the", "image", "shows", "person",
};

}  // namespace

std::span<const std::string_view> base_lexicon() { return kLexicon; }

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n' && text[j] != '\r') ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

Vocabulary::Vocabulary(int base_size) : base_size_(base_size) {
    if (base_size < static_cast<int>(kLexicon.size()))
        throw ConfigError("base vocabulary must hold at least " + std::to_string(kLexicon.size()) + " words");
    for (std::string_view w : kLexicon) {
        index_.emplace(std::string(w), static_cast<int>(words_.size()));
        words_.emplace_back(w);
    }
    while (size() < base_size) {
        std::string w = "<unused_" + std::to_string(size()) + ">";
        index_.emplace(w, size());
        words_.push_back(std::move(w));
    }
}

int Vocabulary::id(std::string_view word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw TemplateError("unknown word '" + std::string(word) + "'");
    return it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.find(word) != index_.end(); }

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) throw ArgumentError("token id " + std::to_string(id) + " out of range");
    return words_[static_cast<std::size_t>(id)];
}

void Vocabulary::add_alias(int id, const std::string& alias) {
    if (id < 0 || id >= size()) throw ArgumentError("alias target out of range");
    if (auto it = index_.find(alias); it != index_.end() && it->second != id)
        throw RegistrationError("alias '" + alias + "' already bound");
    index_[alias] = id;
    words_[static_cast<std::size_t>(id)] = alias;
}

void Vocabulary::grow_to(int new_size) {
    while (size() < new_size) {
        std::string w = "<new_" + std::to_string(size()) + ">";
        index_.emplace(w, size());
        words_.push_back(std::move(w));
    }
}

std::vector<int> Vocabulary::tokenize(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (!out.empty()) out.push_back(' ');
        out += word(id);
    }
    return out;
}

}  // namespace idprior::backbone
