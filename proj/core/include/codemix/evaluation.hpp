#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "codemix/corpus.hpp"
#include "codemix/error.hpp"

namespace codemix {

class LengthMismatch : public Error {
public:
    LengthMismatch(std::size_t gold, std::size_t pred)
        : Error("gold/pred length mismatch: " + std::to_string(gold) + " vs " +
                std::to_string(pred)) {}
};

class EmptyMatrix : public Error {
public:
    EmptyMatrix() : Error("confusion matrix has no samples") {}
};

// Rows are gold, columns predicted, both in Negative/Neutral/Positive order.
struct ConfusionMatrix {
    std::array<std::array<std::int64_t, kNumSentiments>, kNumSentiments> counts{};

    std::int64_t total() const;
    std::int64_t support(int gold_class) const;
    std::int64_t predicted(int pred_class) const;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

// Weighted metrics are support-weighted means of the per-class values;
// weighted recall coincides with accuracy by construction.
struct EvalReport {
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double accuracy = 0.0;
    std::array<ClassMetrics, kNumSentiments> per_class{};
};

enum class LanguageGroup { EnglishDominant = 0, SpanishDominant, Other, Unassigned };
std::string to_string(LanguageGroup group);

struct GroupThresholds {
    double dominant = 0.75;
    double other = 0.4;
    bool inclusive = true;          // ratio == threshold assigns the group
    bool ratio_over_all_tokens = false; // dominance ratio over all tokens instead of lang1+lang2
};

ConfusionMatrix confusion(std::span<const SentimentLabel> gold,
                          std::span<const SentimentLabel> pred);

EvalReport metrics(const ConfusionMatrix& cm);

// Other is checked first; dominance is decided over lang1+lang2 counts
// unless configured otherwise.
LanguageGroup language_group(const Tweet& tweet, const GroupThresholds& thresholds = {});

std::map<LanguageGroup, EvalReport> grouped_report(std::span<const SentimentLabel> gold,
                                                   std::span<const SentimentLabel> pred,
                                                   std::span<const Tweet> tweets,
                                                   const GroupThresholds& thresholds = {});

std::string to_json_string(const EvalReport& report);
std::string to_json_string(const EvalReport& overall,
                           const std::map<LanguageGroup, EvalReport>& groups);

// Flat CSV, one row per (group, class, metric); the overall report uses
// group "all" and weighted metrics use class "all".
std::string to_csv_string(const EvalReport& overall,
                          const std::map<LanguageGroup, EvalReport>& groups = {});

// Prediction file: one `<id>\t<sentiment>` line per tweet.
std::string serialize_predictions(const Corpus& corpus,
                                  std::span<const SentimentLabel> pred);
std::vector<SentimentLabel> parse_predictions(const std::string& text, const Corpus& gold);

} // namespace codemix
