#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace idprior::evaluation {

enum class Binary { real, forged, unparsed };

std::string_view to_string(Binary b);
Binary parse_binary(std::string_view s);

struct Verdict {
    std::string raw_text;
    Binary binary = Binary::unparsed;
};

// First standalone "yes"/"no" word, case-insensitive. Words are runs of
// letters, digits and '_', so "no_glasses" is not a keyword.
Verdict binarize_response(std::string_view text);

enum class PositiveClass { forged, real };

std::string_view to_string(PositiveClass p);
PositiveClass parse_positive_class(std::string_view s);

struct Prediction {
    std::string identity_id;
    Binary predicted = Binary::unparsed;
    Binary truth = Binary::real;  // real or forged
};

struct Confusion {
    long tp = 0, fp = 0, fn = 0, tn = 0;

    long total() const { return tp + fp + fn + tn; }
    double accuracy() const;
    double precision() const;
    double recall() const;
    double f1() const;
    Confusion swapped() const { return {tn, fn, fp, tp}; }
    Confusion& operator+=(const Confusion& o);
    bool operator==(const Confusion&) const = default;
};

struct Metrics {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;

    static Metrics of(const Confusion& c) { return {c.accuracy(), c.precision(), c.recall(), c.f1()}; }
    bool operator==(const Metrics&) const = default;
};

struct MetricsReport {
    std::map<std::string, Confusion> per_identity;
    Metrics macro;  // unweighted mean over identities
    Metrics micro;  // pooled confusion
    PositiveClass positive_class = PositiveClass::forged;

    nlohmann::json to_json() const;
};

// Unparsed predictions count as the wrong class. Empty input throws
// EvaluationError.
MetricsReport compute_metrics(std::span<const Prediction> pairs, PositiveClass positive = PositiveClass::forged);

struct NamedReport {
    std::string variant;
    MetricsReport report;
};

struct RenderedReport {
    std::string text;
    std::string csv;
};

// Macro metrics as percentages with two decimals; column order variant,
// ACC, Precision, Recall, F1.
RenderedReport emit_report(std::span<const NamedReport> reports);
void write_report(const RenderedReport& r, const std::filesystem::path& text_path,
                  const std::filesystem::path& csv_path);

// One line of the predictions dump.
struct PredictionRecord {
    std::string sample_id;
    std::string identity_id;
    std::string raw_text;
    Binary verdict = Binary::unparsed;
    Binary truth = Binary::real;

    nlohmann::json to_json() const;
};

std::string predictions_jsonl(std::span<const PredictionRecord> records);

}  // namespace idprior::evaluation
