#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "codemix/error.hpp"

namespace codemix {

// Report order is fixed: Negative < Neutral < Positive.
enum class SentimentLabel { Negative = 0, Neutral = 1, Positive = 2 };
inline constexpr int kNumSentiments = 3;

// The eight token-level language tags of the corpus format. lang1 is
// English, lang2 Spanish.
enum class LanguageTag {
    Lang1 = 0,
    Lang2,
    Ambiguous,
    Other,
    Mixed,
    Ne,
    Unk,
    Fw,
};
inline constexpr int kNumLanguageTags = 8;

std::string to_string(SentimentLabel label);
std::string to_string(LanguageTag tag);
std::optional<SentimentLabel> parse_sentiment(const std::string& text);
std::optional<LanguageTag> parse_language_tag(const std::string& text);

struct Token {
    std::string surface;
    LanguageTag tag = LanguageTag::Unk;

    bool operator==(const Token&) const = default;
};

// One labeled post: surface tokens with language tags plus a sentiment label.
struct Tweet {
    std::string id;
    std::vector<Token> tokens;
    SentimentLabel sentiment = SentimentLabel::Neutral;

    bool operator==(const Tweet&) const = default;
};

struct Corpus {
    std::vector<Tweet> tweets;
    std::string provenance;

    bool operator==(const Corpus& other) const { return tweets == other.tweets; }
};

struct CorpusStats {
    std::array<std::int64_t, kNumSentiments> sentiment_counts{};
    std::array<std::int64_t, kNumLanguageTags> tag_counts{};
    std::int64_t tweet_count = 0;
    std::int64_t token_count = 0;
};

class MalformedRecord : public Error {
public:
    MalformedRecord(int line_no, const std::string& reason);
    int line_no() const { return line_no_; }
    const std::string& reason() const { return reason_; }

private:
    int line_no_;
    std::string reason_;
};

class EmptyCorpus : public Error {
public:
    EmptyCorpus() : Error("split_corpus: corpus is empty") {}
};

// Corpus file format: records separated by one blank line. Each record is a
// header line `meta <id> <sentiment>` followed by one `<surface>\t<tag>`
// line per token. Sentiments and tags are lowercase.
Corpus parse_corpus(const std::string& text, const std::string& provenance = "");
std::string serialize_corpus(const Corpus& corpus);

Corpus load_corpus_file(const std::string& path);
void save_corpus_file(const Corpus& corpus, const std::string& path);

// Seeded-shuffle split; the first part gets floor(train_fraction * n) tweets.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed);

CorpusStats corpus_stats(const Corpus& corpus);

// JSON with the CorpusStats field names.
std::string to_json_string(const CorpusStats& stats);

} // namespace codemix
