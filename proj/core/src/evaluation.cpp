#include "codemix/evaluation.hpp"

#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace codemix {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (const auto& row : counts) {
        for (std::int64_t c : row) t += c;
    }
    return t;
}

std::int64_t ConfusionMatrix::support(int gold_class) const {
    std::int64_t t = 0;
    for (std::int64_t c : counts[gold_class]) t += c;
    return t;
}

std::int64_t ConfusionMatrix::predicted(int pred_class) const {
    std::int64_t t = 0;
    for (const auto& row : counts) t += row[pred_class];
    return t;
}

std::string to_string(LanguageGroup group) {
    switch (group) {
        case LanguageGroup::EnglishDominant: return "english_dominant";
        case LanguageGroup::SpanishDominant: return "spanish_dominant";
        case LanguageGroup::Other: return "other";
        case LanguageGroup::Unassigned: return "unassigned";
    }
    return "unassigned";
}

ConfusionMatrix confusion(std::span<const SentimentLabel> gold,
                          std::span<const SentimentLabel> pred) {
    if (gold.size() != pred.size()) throw LengthMismatch(gold.size(), pred.size());
    if (gold.empty()) throw EmptyMatrix();
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        cm.counts[static_cast<int>(gold[i])][static_cast<int>(pred[i])] += 1;
    }
    return cm;
}

EvalReport metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total == 0) throw EmptyMatrix();

    EvalReport report;
    std::int64_t correct = 0;
    for (int c = 0; c < kNumSentiments; ++c) {
        const std::int64_t tp = cm.counts[c][c];
        const std::int64_t support = cm.support(c);
        const std::int64_t predicted = cm.predicted(c);
        correct += tp;

        ClassMetrics& m = report.per_class[c];
        m.support = support;
        m.precision = predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted);
        m.recall = support == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(support);
        m.f1 = (m.precision + m.recall) == 0.0
                   ? 0.0
                   : 2.0 * m.precision * m.recall / (m.precision + m.recall);

        const double weight = static_cast<double>(support);
        report.weighted_precision += weight * m.precision;
        report.weighted_recall += weight * m.recall;
        report.weighted_f1 += weight * m.f1;
    }
    const auto n = static_cast<double>(total);
    report.weighted_precision /= n;
    report.weighted_recall /= n;
    report.weighted_f1 /= n;
    report.accuracy = static_cast<double>(correct) / n;
    return report;
}

LanguageGroup language_group(const Tweet& tweet, const GroupThresholds& thresholds) {
    std::int64_t english = 0, spanish = 0, misc = 0;
    for (const Token& token : tweet.tokens) {
        if (token.tag == LanguageTag::Lang1) ++english;
        else if (token.tag == LanguageTag::Lang2) ++spanish;
        else ++misc;
    }
    const auto total = static_cast<double>(english + spanish + misc);
    const auto meets = [&](double ratio, double threshold) {
        return thresholds.inclusive ? ratio >= threshold : ratio > threshold;
    };

    if (total > 0 && meets(static_cast<double>(misc) / total, thresholds.other)) {
        return LanguageGroup::Other;
    }
    const double denom = thresholds.ratio_over_all_tokens
                             ? total
                             : static_cast<double>(english + spanish);
    if (english + spanish > 0 && denom > 0) {
        if (meets(static_cast<double>(english) / denom, thresholds.dominant)) {
            return LanguageGroup::EnglishDominant;
        }
        if (meets(static_cast<double>(spanish) / denom, thresholds.dominant)) {
            return LanguageGroup::SpanishDominant;
        }
    }
    return LanguageGroup::Unassigned;
}

std::map<LanguageGroup, EvalReport> grouped_report(std::span<const SentimentLabel> gold,
                                                   std::span<const SentimentLabel> pred,
                                                   std::span<const Tweet> tweets,
                                                   const GroupThresholds& thresholds) {
    if (gold.size() != pred.size() || gold.size() != tweets.size()) {
        throw LengthMismatch(gold.size(), pred.size());
    }
    std::map<LanguageGroup, std::pair<std::vector<SentimentLabel>, std::vector<SentimentLabel>>>
        buckets;
    for (std::size_t i = 0; i < tweets.size(); ++i) {
        auto& bucket = buckets[language_group(tweets[i], thresholds)];
        bucket.first.push_back(gold[i]);
        bucket.second.push_back(pred[i]);
    }
    std::map<LanguageGroup, EvalReport> reports;
    for (const auto& [group, bucket] : buckets) {
        reports[group] = metrics(confusion(bucket.first, bucket.second));
    }
    return reports;
}

namespace {

nlohmann::ordered_json report_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["weighted_precision"] = report.weighted_precision;
    j["weighted_recall"] = report.weighted_recall;
    j["weighted_f1"] = report.weighted_f1;
    j["accuracy"] = report.accuracy;
    nlohmann::ordered_json per_class;
    for (int c = 0; c < kNumSentiments; ++c) {
        const ClassMetrics& m = report.per_class[c];
        per_class[to_string(static_cast<SentimentLabel>(c))] = {{"precision", m.precision},
                                                                {"recall", m.recall},
                                                                {"f1", m.f1},
                                                                {"support", m.support}};
    }
    j["per_class"] = per_class;
    return j;
}

void append_csv_rows(std::ostringstream& out, const std::string& group,
                     const EvalReport& report) {
    for (int c = 0; c < kNumSentiments; ++c) {
        const std::string cls = to_string(static_cast<SentimentLabel>(c));
        const ClassMetrics& m = report.per_class[c];
        out << group << "," << cls << ",precision," << m.precision << "\n";
        out << group << "," << cls << ",recall," << m.recall << "\n";
        out << group << "," << cls << ",f1," << m.f1 << "\n";
        out << group << "," << cls << ",support," << m.support << "\n";
    }
    out << group << ",all,weighted_precision," << report.weighted_precision << "\n";
    out << group << ",all,weighted_recall," << report.weighted_recall << "\n";
    out << group << ",all,weighted_f1," << report.weighted_f1 << "\n";
    out << group << ",all,accuracy," << report.accuracy << "\n";
}

} // namespace

std::string to_json_string(const EvalReport& report) { return report_json(report).dump(2); }

std::string to_json_string(const EvalReport& overall,
                           const std::map<LanguageGroup, EvalReport>& groups) {
    nlohmann::ordered_json j;
    j["overall"] = report_json(overall);
    nlohmann::ordered_json g;
    for (const auto& [group, report] : groups) {
        g[to_string(group)] = report_json(report);
    }
    j["groups"] = g;
    return j.dump(2);
}

std::string to_csv_string(const EvalReport& overall,
                          const std::map<LanguageGroup, EvalReport>& groups) {
    std::ostringstream out;
    out.precision(17);
    out << "group,class,metric,value\n";
    append_csv_rows(out, "all", overall);
    for (const auto& [group, report] : groups) {
        append_csv_rows(out, to_string(group), report);
    }
    return out.str();
}

std::string serialize_predictions(const Corpus& corpus, std::span<const SentimentLabel> pred) {
    if (corpus.tweets.size() != pred.size()) {
        throw LengthMismatch(corpus.tweets.size(), pred.size());
    }
    std::string out;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        out += corpus.tweets[i].id + "\t" + to_string(pred[i]) + "\n";
    }
    return out;
}

std::vector<SentimentLabel> parse_predictions(const std::string& text, const Corpus& gold) {
    std::unordered_map<std::string, SentimentLabel> by_id;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw Error("prediction line " + std::to_string(line_no) +
                        ": expected '<id>\\t<sentiment>'");
        }
        const std::string id = line.substr(0, tab);
        const auto sentiment = parse_sentiment(line.substr(tab + 1));
        if (!sentiment) {
            throw Error("prediction line " + std::to_string(line_no) + ": unknown sentiment");
        }
        if (!by_id.emplace(id, *sentiment).second) {
            throw Error("prediction line " + std::to_string(line_no) + ": duplicate id '" + id +
                        "'");
        }
    }
    if (by_id.size() != gold.tweets.size()) {
        throw Error("prediction count " + std::to_string(by_id.size()) +
                    " does not match gold corpus size " + std::to_string(gold.tweets.size()));
    }
    std::vector<SentimentLabel> pred;
    pred.reserve(gold.tweets.size());
    for (const Tweet& tweet : gold.tweets) {
        auto it = by_id.find(tweet.id);
        if (it == by_id.end()) {
            throw Error("no prediction for tweet id '" + tweet.id + "'");
        }
        pred.push_back(it->second);
    }
    return pred;
}

} // namespace codemix
