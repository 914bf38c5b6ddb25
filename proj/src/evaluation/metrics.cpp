#include "idprior/evaluation/metrics.hpp"

#include "idprior/core/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

namespace idprior::evaluation {

std::string_view to_string(Binary b) {
    switch (b) {
        case Binary::real: return "real";
        case Binary::forged: return "forged";
        case Binary::unparsed: return "unparsed";
    }
    return "unparsed";
}

Binary parse_binary(std::string_view s) {
    if (s == "real") return Binary::real;
    if (s == "forged") return Binary::forged;
    if (s == "unparsed") return Binary::unparsed;
    throw ArgumentError("unknown verdict '" + std::string(s) + "'");
}

std::string_view to_string(PositiveClass p) { return p == PositiveClass::forged ? "forged" : "real"; }

PositiveClass parse_positive_class(std::string_view s) {
    if (s == "forged") return PositiveClass::forged;
    if (s == "real") return PositiveClass::real;
    throw ArgumentError("positive class must be 'forged' or 'real', got '" + std::string(s) + "'");
}

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool equals_lower(std::string_view word, std::string_view lower) {
    if (word.size() != lower.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(word[i])) != lower[i]) return false;
    return true;
}

}  // namespace

Verdict binarize_response(std::string_view text) {
    Verdict v{std::string(text), Binary::unparsed};
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !word_char(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && word_char(text[j])) ++j;
        const std::string_view w = text.substr(i, j - i);
        if (equals_lower(w, "yes")) {
            v.binary = Binary::forged;
            return v;
        }
        if (equals_lower(w, "no")) {
            v.binary = Binary::real;
            return v;
        }
        i = j;
    }
    return v;
}

double Confusion::accuracy() const { return total() ? static_cast<double>(tp + tn) / total() : 0.0; }
double Confusion::precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0; }
double Confusion::recall() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }

double Confusion::f1() const {
    const double p = precision();
    const double r = recall();
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

nlohmann::json MetricsReport::to_json() const {
    auto metrics = [](const Metrics& m) {
        return nlohmann::json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    };
    nlohmann::json j = {{"positive_class", to_string(positive_class)},
                        {"macro", metrics(macro)},
                        {"micro", metrics(micro)},
                        {"per_identity", nlohmann::json::object()}};
    for (const auto& [id, c] : per_identity) {
        nlohmann::json e = metrics(Metrics::of(c));
        e["tp"] = c.tp;
        e["fp"] = c.fp;
        e["fn"] = c.fn;
        e["tn"] = c.tn;
        j["per_identity"][id] = e;
    }
    return j;
}

MetricsReport compute_metrics(std::span<const Prediction> pairs, PositiveClass positive) {
    if (pairs.empty()) throw EvaluationError("compute_metrics needs at least one prediction");
    MetricsReport r;
    r.positive_class = positive;
    const Binary pos = positive == PositiveClass::forged ? Binary::forged : Binary::real;
    for (const auto& p : pairs) {
        if (p.truth == Binary::unparsed) throw EvaluationError("ground truth must be real or forged");
        Confusion& c = r.per_identity[p.identity_id];
        const bool truth_pos = p.truth == pos;
        // unparsed is the wrong class whatever the truth
        const bool correct = p.predicted == p.truth;
        if (truth_pos) (correct ? c.tp : c.fn)++;
        else (correct ? c.tn : c.fp)++;
    }
    Confusion pooled;
    for (const auto& [id, c] : r.per_identity) {
        const Metrics m = Metrics::of(c);
        r.macro.accuracy += m.accuracy;
        r.macro.precision += m.precision;
        r.macro.recall += m.recall;
        r.macro.f1 += m.f1;
        pooled += c;
    }
    const double n = static_cast<double>(r.per_identity.size());
    r.macro.accuracy /= n;
    r.macro.precision /= n;
    r.macro.recall /= n;
    r.macro.f1 /= n;
    r.micro = Metrics::of(pooled);
    return r;
}

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

}  // namespace

RenderedReport emit_report(std::span<const NamedReport> reports) {
    RenderedReport out;
    out.csv = "variant,ACC,Precision,Recall,F1\n";
    std::size_t width = 7;
    for (const auto& r : reports) width = std::max(width, r.variant.size());
    auto row = [&](const std::string& a, const std::string& b, const std::string& c, const std::string& d,
                   const std::string& e) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(width), a.c_str(), b.c_str(),
                      c.c_str(), d.c_str(), e.c_str());
        return std::string(buf);
    };
    out.text = row("variant", "ACC", "Precision", "Recall", "F1");
    for (const auto& r : reports) {
        const Metrics& m = r.report.macro;
        out.csv += r.variant + "," + pct(m.accuracy) + "," + pct(m.precision) + "," + pct(m.recall) + "," + pct(m.f1) + "\n";
        out.text += row(r.variant, pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1));
    }
    return out;
}

void write_report(const RenderedReport& r, const std::filesystem::path& text_path, const std::filesystem::path& csv_path) {
    for (const auto& [path, body] : {std::pair{text_path, &r.text}, std::pair{csv_path, &r.csv}}) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write report '" + path.string() + "'");
        f << *body;
    }
}

nlohmann::json PredictionRecord::to_json() const {
    return {{"sample_id", sample_id},
            {"identity_id", identity_id},
            {"raw_text", raw_text},
            {"verdict", to_string(verdict)},
            {"ground_truth", to_string(truth)}};
}

std::string predictions_jsonl(std::span<const PredictionRecord> records) {
    std::string out;
    for (const auto& r : records) out += r.to_json().dump() + "\n";
    return out;
}

}  // namespace idprior::evaluation
