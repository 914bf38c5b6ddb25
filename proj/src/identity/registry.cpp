#include "idprior/identity/registry.hpp"

#include "idprior/core/errors.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace idprior::identity {

using nlohmann::json;

std::string_view to_string(TokenLayout layout) { return layout == TokenLayout::decoupled ? "decoupled" : "single"; }

TokenLayout parse_layout(std::string_view s) {
    if (s == "decoupled") return TokenLayout::decoupled;
    if (s == "single") return TokenLayout::single;
    throw ConfigError("unknown token layout '" + std::string(s) + "'");
}

std::vector<int> IdentityProfile::block_a() const {
    std::vector<int> out{id_a_token};
    out.insert(out.end(), soft_a.begin(), soft_a.end());
    return out;
}

std::vector<int> IdentityProfile::block_b() const {
    if (id_b_token < 0) return {};
    std::vector<int> out{id_b_token};
    out.insert(out.end(), soft_b.begin(), soft_b.end());
    return out;
}

std::int64_t ThetaPrior::scalar_count() const {
    std::int64_t n = 0;
    for (const Parameter* p : params) n += p->size();
    return n;
}

std::vector<std::string> ThetaPrior::names() const {
    std::vector<std::string> out;
    for (const Parameter* p : params) out.push_back(p->name);
    return out;
}

std::string creation_timestamp() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (end && *end == '\0') t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::vector<int> range(int start, int n) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = start + i;
    return out;
}

IdentityProfile layout_profile(const std::string& identity_id, TokenLayout layout, int n_soft,
                               const backbone::VocabExtension& ext) {
    IdentityProfile p;
    p.identity_id = identity_id;
    p.layout = layout;
    p.n_soft = n_soft;
    p.extension = ext;
    const int s = ext.start_id;
    if (layout == TokenLayout::decoupled) {
        p.id_a_token = s;
        p.soft_a = range(s + 1, n_soft);
        p.id_b_token = s + 1 + n_soft;
        p.soft_b = range(s + 2 + n_soft, n_soft);
    } else {
        p.id_a_token = s;
        p.soft_a = range(s + 1, 2 * n_soft);
    }
    return p;
}

int expected_count(TokenLayout layout, int n_soft) {
    return layout == TokenLayout::decoupled ? 2 + 2 * n_soft : 1 + 2 * n_soft;
}

void bind_aliases(backbone::Vocabulary& vocab, const IdentityProfile& p) {
    const std::string& n = p.identity_id;
    if (p.layout == TokenLayout::decoupled) {
        vocab.add_alias(p.id_a_token, "<id_a:" + n + ">");
        vocab.add_alias(p.id_b_token, "<id_b:" + n + ">");
        for (std::size_t k = 0; k < p.soft_a.size(); ++k)
            vocab.add_alias(p.soft_a[k], "<soft_a:" + n + ":" + std::to_string(k) + ">");
        for (std::size_t k = 0; k < p.soft_b.size(); ++k)
            vocab.add_alias(p.soft_b[k], "<soft_b:" + n + ":" + std::to_string(k) + ">");
    } else {
        vocab.add_alias(p.id_a_token, "<id:" + n + ">");
        for (std::size_t k = 0; k < p.soft_a.size(); ++k)
            vocab.add_alias(p.soft_a[k], "<soft:" + n + ":" + std::to_string(k) + ">");
    }
}

}  // namespace

const IdentityProfile& IdentityRegistry::register_identity(backbone::VisionLanguageModel& model,
                                                           const std::string& identity_id, int n_soft, Rng& rng,
                                                           backbone::InitPolicy policy, TokenLayout layout) {
    if (identity_id.empty() || identity_id.find_first_of(" \t\n:<>") != std::string::npos)
        throw RegistrationError("invalid identity name '" + identity_id + "'");
    if (contains(identity_id)) throw RegistrationError("identity '" + identity_id + "' already registered");
    if (n_soft < 1) throw RegistrationError("n_soft must be at least 1");
    const auto ext = model.extend_vocabulary(expected_count(layout, n_soft), policy, rng);
    IdentityProfile p = layout_profile(identity_id, layout, n_soft, ext);
    p.created_at = creation_timestamp();
    bind_aliases(model.vocabulary(), p);
    return profiles_.emplace(identity_id, std::move(p)).first->second;
}

const IdentityProfile& IdentityRegistry::profile(const std::string& identity_id) const {
    auto it = profiles_.find(identity_id);
    if (it == profiles_.end()) throw RegistrationError("identity '" + identity_id + "' is not registered");
    return it->second;
}

std::vector<const IdentityProfile*> IdentityRegistry::profiles() const {
    std::vector<const IdentityProfile*> out;
    for (const auto& [_, p] : profiles_) out.push_back(&p);
    return out;
}

json profile_to_json(const IdentityProfile& p) {
    return {{"identity_id", p.identity_id},
            {"layout", to_string(p.layout)},
            {"n_soft", p.n_soft},
            {"extension", p.extension.index},
            {"token_range", {p.extension.start_id, p.extension.end_id()}},
            {"id_a", p.id_a_token},
            {"id_b", p.id_b_token},
            {"soft_a", p.soft_a},
            {"soft_b", p.soft_b},
            {"created_at", p.created_at}};
}

IdentityProfile profile_from_json(const json& j) {
    try {
        backbone::VocabExtension ext;
        ext.index = j.at("extension").get<int>();
        const auto r = j.at("token_range").get<std::vector<int>>();
        if (r.size() != 2 || r[1] <= r[0]) throw RegistrationError("bad token range in registry");
        ext.start_id = r[0];
        ext.count = r[1] - r[0];
        char buf[32];
        std::snprintf(buf, sizeof(buf), "vocab.ext%03d", ext.index);
        ext.input_param = std::string(buf) + ".input";
        ext.output_param = std::string(buf) + ".output";
        const auto layout = parse_layout(j.at("layout").get<std::string>());
        const int n_soft = j.at("n_soft").get<int>();
        if (n_soft < 1 || expected_count(layout, n_soft) != ext.count)
            throw RegistrationError("registry token count disagrees with n_soft");
        IdentityProfile p = layout_profile(j.at("identity_id").get<std::string>(), layout, n_soft, ext);
        p.created_at = j.value("created_at", std::string());
        if (p.id_a_token != j.at("id_a").get<int>() || p.id_b_token != j.at("id_b").get<int>() ||
            p.soft_a != j.at("soft_a").get<std::vector<int>>() || p.soft_b != j.at("soft_b").get<std::vector<int>>())
            throw RegistrationError("registry token layout is not contiguous for '" + p.identity_id + "'");
        return p;
    } catch (const json::exception& e) {
        throw RegistrationError(std::string("malformed registry record: ") + e.what());
    }
}

std::string IdentityRegistry::serialize() const {
    // Ordered by allocation so the file reads in token order.
    std::vector<const IdentityProfile*> ps = profiles();
    std::sort(ps.begin(), ps.end(), [](auto* a, auto* b) { return a->extension.start_id < b->extension.start_id; });
    std::string out;
    for (const auto* p : ps) out += profile_to_json(*p).dump() + "\n";
    return out;
}

void IdentityRegistry::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write registry '" + path.string() + "'");
    out << serialize();
}

IdentityRegistry IdentityRegistry::parse(std::string_view text, const backbone::VisionLanguageModel& model) {
    IdentityRegistry reg;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw RegistrationError(std::string("registry line is not JSON: ") + e.what());
        }
        IdentityProfile p = profile_from_json(j);
        const auto& exts = model.extensions();
        if (p.extension.index < 0 || p.extension.index >= static_cast<int>(exts.size()))
            throw RegistrationError("registry refers to a missing vocabulary extension");
        const auto& e = exts[static_cast<std::size_t>(p.extension.index)];
        if (e.start_id != p.extension.start_id || e.count != p.extension.count)
            throw RegistrationError("registry disagrees with the checkpoint for '" + p.identity_id + "'");
        if (reg.contains(p.identity_id)) throw RegistrationError("duplicate identity '" + p.identity_id + "' in registry");
        reg.profiles_.emplace(p.identity_id, std::move(p));
    }
    return reg;
}

IdentityRegistry IdentityRegistry::load(const std::filesystem::path& path, const backbone::VisionLanguageModel& model) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read registry '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), model);
}

std::vector<int> expand_prompt(const backbone::Vocabulary& vocab, std::string_view template_text,
                               const IdentityProfile& profile) {
    const std::string& n = profile.identity_id;
    const bool decoupled = profile.layout == TokenLayout::decoupled;
    std::vector<int> out;
    for (const std::string& w : backbone::split_words(template_text)) {
        if (decoupled && (w == "<id_a>" || w == "<id_a:" + n + ">")) {
            const auto b = profile.block_a();
            out.insert(out.end(), b.begin(), b.end());
        } else if (decoupled && (w == "<id_b>" || w == "<id_b:" + n + ">")) {
            const auto b = profile.block_b();
            out.insert(out.end(), b.begin(), b.end());
        } else if (!decoupled && (w == "<id>" || w == "<id:" + n + ">")) {
            const auto b = profile.block_a();
            out.insert(out.end(), b.begin(), b.end());
        } else if (w.size() > 2 && w.front() == '<' && w.rfind("<id", 0) == 0) {
            throw TemplateError("placeholder '" + w + "' does not resolve for identity '" + n + "'");
        } else {
            out.push_back(vocab.id(w));
        }
    }
    return out;
}

std::vector<int> deexpand(std::span<const int> ids, const IdentityProfile& profile) {
    std::vector<int> out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.push_back(ids[i]);
        std::size_t skip = 0;
        if (ids[i] == profile.id_a_token) skip = profile.soft_a.size();
        else if (profile.id_b_token >= 0 && ids[i] == profile.id_b_token) skip = profile.soft_b.size();
        const auto& soft = ids[i] == profile.id_a_token ? profile.soft_a : profile.soft_b;
        for (std::size_t k = 0; k < skip && i + 1 < ids.size() && ids[i + 1] == soft[k]; ++k) ++i;
    }
    return out;
}

ThetaPrior collect_theta_prior(backbone::VisionLanguageModel& model, const IdentityProfile& profile) {
    ThetaPrior theta;
    theta.params.push_back(&model.parameters().at(profile.extension.input_param));
    theta.params.push_back(&model.parameters().at(profile.extension.output_param));
    return theta;
}

}  // namespace idprior::identity
