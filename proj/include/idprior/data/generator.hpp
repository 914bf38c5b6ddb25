#pragma once

#include "idprior/core/raster.hpp"
#include "idprior/core/rng.hpp"
#include "idprior/data/attributes.hpp"
#include "idprior/data/manifest.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace idprior::data {

struct CorpusQuota {
    int real_train = 40;
    int forged_train = 60;
    int real_test = 20;
    int forged_test = 20;

    static CorpusQuota desk_scale() { return {}; }
    static CorpusQuota paper_scale() { return {279, 780, 50, 50}; }
    int total() const { return real_train + forged_train + real_test + forged_test; }
};

// Minimum number of differing appearance attributes between identities.
inline constexpr int kSignatureMargin = 2;

// Draws a signature at least kSignatureMargin away from every `existing` one.
SyntheticIdentitySpec sample_identity_spec(const std::string& identity_id, std::uint64_t seed,
                                           std::span<const SyntheticIdentitySpec> existing);

// Throws GenerationError when `spec` is closer than the margin to any other.
void check_signature_margin(const SyntheticIdentitySpec& spec, std::span<const SyntheticIdentitySpec> existing);

// Renders the full per-identity corpus: real images plus train-family and
// test-family forgeries, rasters attached, records in canonical order.
// Requires every quota >= 1 and a signature clear of `existing`.
std::vector<ManifestRecord> generate_identity_corpus(const SyntheticIdentitySpec& spec, const CorpusQuota& quota,
                                                     std::span<const SyntheticIdentitySpec> existing,
                                                     std::uint64_t corpus_seed);

// Same as above without the quota/margin preconditions (zero counts allowed).
std::vector<ManifestRecord> generate_records(const SyntheticIdentitySpec& spec, const CorpusQuota& quota,
                                             std::uint64_t corpus_seed);

enum class ForgeryFamily { none, simswap, photomaker, roop, storymaker, pulid };

std::string_view method_name(ForgeryFamily f);
// Train families: simswap, photomaker. Test families: roop, storymaker, pulid.
bool is_train_family(ForgeryFamily f);

// Signature with uniformly drawn attributes and no margin check.
SyntheticIdentitySpec random_identity_spec(const std::string& identity_id, Rng& rng);

// One record of `spec` rendered by `family` (none = authentic) from `seed`.
// Split follows the family; real records default to train. The sample_id
// is left empty.
ManifestRecord render_sample(const SyntheticIdentitySpec& spec, ForgeryFamily family, std::uint64_t seed);

// Anomaly dimensions of rendered attributes against a claimed signature.
AnomalyLabels anomalies_against(const RenderedAttributes& a, const SyntheticIdentitySpec& spec);

// Draws one avatar. `clean` skips sensor noise (diffusion-style output).
Raster render_avatar(const RenderedAttributes& attributes, Rng& rng, bool clean = false);

// Template prose listing each true anomaly dimension, ending in the verdict
// keyword ("Yes" for forged, "No" for real). With the rendered attributes at
// hand every dimension is stated as observed and judged in turn.
std::string build_cot_description(const ManifestRecord& record);
std::string build_cot_description(Label label, const AnomalyLabels& anomalies,
                                  const RenderedAttributes* observed = nullptr);

// Full desk-scale dataset: target identities plus a generic population used
// for backbone pretraining and adapter training (train families only).
struct DatasetConfig {
    int identities = 5;
    CorpusQuota quota;
    int generic_identities = 24;
    int generic_real = 8;
    int generic_forged = 8;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    std::vector<SyntheticIdentitySpec> targets;
    std::vector<SyntheticIdentitySpec> generic;
    std::vector<ManifestRecord> target_records;
    std::vector<ManifestRecord> generic_records;

    const SyntheticIdentitySpec& spec(const std::string& identity_id) const;
};

SyntheticDataset generate_dataset(const DatasetConfig& config);

}  // namespace idprior::data
