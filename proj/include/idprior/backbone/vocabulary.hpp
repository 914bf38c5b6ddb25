#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace idprior::backbone {

// Reserved ids inside the base lexicon.
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kImageToken = 3;

// The 64 named words of the base lexicon, in id order.
std::span<const std::string_view> base_lexicon();

// Word-level vocabulary: base words plus aliases for extension tokens.
class Vocabulary {
public:
    explicit Vocabulary(int base_size = 64);

    int base_size() const { return base_size_; }
    int size() const { return static_cast<int>(words_.size()); }

    // Throws TemplateError for unknown words.
    int id(std::string_view word) const;
    bool contains(std::string_view word) const;
    const std::string& word(int id) const;

    void add_alias(int id, const std::string& alias);
    // Appends placeholder words "<new_k>" up to `new_size`.
    void grow_to(int new_size);

    std::vector<int> tokenize(std::string_view text) const;
    std::string detokenize(std::span<const int> ids) const;

private:
    int base_size_;
    std::vector<std::string> words_;
    std::map<std::string, int, std::less<>> index_;
};

std::vector<std::string> split_words(std::string_view text);

}  // namespace idprior::backbone
