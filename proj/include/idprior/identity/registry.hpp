#pragma once

#include "idprior/backbone/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace idprior::identity {

// decoupled: separate appearance (<id_a>) and behavior (<id_b>) blocks.
// single: one <id> identifier followed by all 2*n_soft soft tokens.
enum class TokenLayout { decoupled, single };

std::string_view to_string(TokenLayout layout);
TokenLayout parse_layout(std::string_view s);

struct IdentityProfile {
    std::string identity_id;
    TokenLayout layout = TokenLayout::decoupled;
    int n_soft = 4;
    int id_a_token = -1;  // the <id> token under the single layout
    int id_b_token = -1;  // -1 under the single layout
    std::vector<int> soft_a;
    std::vector<int> soft_b;
    backbone::VocabExtension extension;
    std::string created_at;

    int token_count() const { return extension.count; }
    bool owns(int token) const { return token >= extension.start_id && token < extension.end_id(); }

    // Identifier followed by its soft tokens.
    std::vector<int> block_a() const;
    std::vector<int> block_b() const;
};

// Handles to the trainable rows of one identity: its input rows and its
// output rows, nothing else.
struct ThetaPrior {
    std::vector<Parameter*> params;

    std::int64_t scalar_count() const;
    std::vector<std::string> names() const;
};

class IdentityRegistry {
public:
    // Allocates 2 + 2*n_soft tokens (decoupled) or 1 + 2*n_soft (single)
    // and binds "<id_a:NAME>", "<id_b:NAME>", "<soft_a:NAME:k>", ...
    const IdentityProfile& register_identity(backbone::VisionLanguageModel& model, const std::string& identity_id,
                                             int n_soft, Rng& rng,
                                             backbone::InitPolicy policy = backbone::InitPolicy::mean_plus_noise,
                                             TokenLayout layout = TokenLayout::decoupled);

    bool contains(const std::string& identity_id) const { return profiles_.count(identity_id) != 0; }
    const IdentityProfile& profile(const std::string& identity_id) const;
    std::vector<const IdentityProfile*> profiles() const;
    std::size_t size() const { return profiles_.size(); }

    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    // Checks every record against the model's extension table.
    static IdentityRegistry parse(std::string_view text, const backbone::VisionLanguageModel& model);
    static IdentityRegistry load(const std::filesystem::path& path, const backbone::VisionLanguageModel& model);

private:
    std::map<std::string, IdentityProfile> profiles_;
};

// Replaces each identifier placeholder by the identifier token and its soft
// tokens. Placeholders are "<id_a>"/"<id_b>" (decoupled) or "<id>" (single),
// or the namespaced aliases of `profile`. Other words go through the
// vocabulary; unknown words throw TemplateError.
std::vector<int> expand_prompt(const backbone::Vocabulary& vocab, std::string_view template_text,
                               const IdentityProfile& profile);

// Drops soft tokens that follow an identifier of `profile`.
std::vector<int> deexpand(std::span<const int> ids, const IdentityProfile& profile);

ThetaPrior collect_theta_prior(backbone::VisionLanguageModel& model, const IdentityProfile& profile);

nlohmann::json profile_to_json(const IdentityProfile& p);
IdentityProfile profile_from_json(const nlohmann::json& j);

// UTC ISO-8601 time, taken from SOURCE_DATE_EPOCH when that is set.
std::string creation_timestamp();

}  // namespace idprior::identity
