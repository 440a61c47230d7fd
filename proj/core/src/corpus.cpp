#include "codemix/corpus.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "codemix/rng.hpp"

namespace codemix {

namespace {

const char* kSentimentNames[kNumSentiments] = {"negative", "neutral", "positive"};
const char* kTagNames[kNumLanguageTags] = {"lang1", "lang2", "ambiguous", "other",
                                           "mixed",  "ne",    "unk",       "fw"};

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            if (!current.empty() && current.back() == '\r') current.pop_back();
            lines.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) {
        if (current.back() == '\r') current.pop_back();
        lines.push_back(std::move(current));
    }
    return lines;
}

std::vector<std::string> split_whitespace(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream in(line);
    std::string field;
    while (in >> field) fields.push_back(field);
    return fields;
}

} // namespace

MalformedRecord::MalformedRecord(int line_no, const std::string& reason)
    : Error("malformed record at line " + std::to_string(line_no) + ": " + reason),
      line_no_(line_no),
      reason_(reason) {}

std::string to_string(SentimentLabel label) { return kSentimentNames[static_cast<int>(label)]; }

std::string to_string(LanguageTag tag) { return kTagNames[static_cast<int>(tag)]; }

std::optional<SentimentLabel> parse_sentiment(const std::string& text) {
    for (int i = 0; i < kNumSentiments; ++i) {
        if (text == kSentimentNames[i]) return static_cast<SentimentLabel>(i);
    }
    return std::nullopt;
}

std::optional<LanguageTag> parse_language_tag(const std::string& text) {
    for (int i = 0; i < kNumLanguageTags; ++i) {
        if (text == kTagNames[i]) return static_cast<LanguageTag>(i);
    }
    return std::nullopt;
}

Corpus parse_corpus(const std::string& text, const std::string& provenance) {
    Corpus corpus;
    corpus.provenance = provenance;

    const std::vector<std::string> lines = split_lines(text);
    std::unordered_set<std::string> seen_ids;

    std::size_t i = 0;
    while (i < lines.size()) {
        const int meta_line_no = static_cast<int>(i) + 1;
        const std::string& meta = lines[i];
        if (meta.empty()) {
            throw MalformedRecord(meta_line_no, "missing meta line");
        }
        const std::vector<std::string> fields = split_whitespace(meta);
        if (fields.size() != 3 || fields[0] != "meta") {
            throw MalformedRecord(meta_line_no,
                                  "expected 'meta <id> <sentiment>', got '" + meta + "'");
        }
        const std::string& id = fields[1];
        const auto sentiment = parse_sentiment(fields[2]);
        if (!sentiment) {
            throw MalformedRecord(meta_line_no, "unknown sentiment '" + fields[2] + "'");
        }
        if (!seen_ids.insert(id).second) {
            throw MalformedRecord(meta_line_no, "duplicate id '" + id + "'");
        }

        Tweet tweet;
        tweet.id = id;
        tweet.sentiment = *sentiment;
        ++i;
        while (i < lines.size() && !lines[i].empty()) {
            const int line_no = static_cast<int>(i) + 1;
            const std::string& line = lines[i];
            const std::size_t tab = line.find('\t');
            if (tab == std::string::npos || tab == 0 ||
                line.find('\t', tab + 1) != std::string::npos) {
                throw MalformedRecord(line_no, "expected '<surface>\\t<tag>', got '" + line + "'");
            }
            const std::string surface = line.substr(0, tab);
            const std::string tag_text = line.substr(tab + 1);
            const auto tag = parse_language_tag(tag_text);
            if (!tag) {
                throw MalformedRecord(line_no, "unknown language tag '" + tag_text + "'");
            }
            tweet.tokens.push_back(Token{surface, *tag});
            ++i;
        }
        if (tweet.tokens.empty()) {
            throw MalformedRecord(meta_line_no, "empty tweet '" + id + "'");
        }
        corpus.tweets.push_back(std::move(tweet));
        if (i < lines.size()) ++i; // consume the blank separator line
    }
    return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    for (const Tweet& tweet : corpus.tweets) {
        out += "meta " + tweet.id + " " + to_string(tweet.sentiment) + "\n";
        for (const Token& token : tweet.tokens) {
            out += token.surface + "\t" + to_string(token.tag) + "\n";
        }
        out += "\n";
    }
    return out;
}

Corpus load_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_corpus(buf.str(), path);
}

void save_corpus_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file: " + path);
    out << serialize_corpus(corpus);
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction,
                                       std::uint64_t seed) {
    if (corpus.tweets.empty()) throw EmptyCorpus();
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error("split_corpus: train_fraction must be in (0, 1)");
    }
    const std::size_t n = corpus.tweets.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    const auto train_size =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    Corpus train, dev;
    train.provenance = corpus.provenance;
    dev.provenance = corpus.provenance;
    for (std::size_t i = 0; i < n; ++i) {
        (i < train_size ? train : dev).tweets.push_back(corpus.tweets[order[i]]);
    }
    return {std::move(train), std::move(dev)};
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.tweet_count = static_cast<std::int64_t>(corpus.tweets.size());
    for (const Tweet& tweet : corpus.tweets) {
        stats.sentiment_counts[static_cast<int>(tweet.sentiment)] += 1;
        stats.token_count += static_cast<std::int64_t>(tweet.tokens.size());
        for (const Token& token : tweet.tokens) {
            stats.tag_counts[static_cast<int>(token.tag)] += 1;
        }
    }
    return stats;
}

std::string to_json_string(const CorpusStats& stats) {
    nlohmann::ordered_json j;
    j["tweet_count"] = stats.tweet_count;
    j["token_count"] = stats.token_count;
    nlohmann::ordered_json sentiments;
    for (int i = 0; i < kNumSentiments; ++i) {
        sentiments[kSentimentNames[i]] = stats.sentiment_counts[i];
    }
    j["sentiment_counts"] = sentiments;
    nlohmann::ordered_json tags;
    for (int i = 0; i < kNumLanguageTags; ++i) {
        tags[kTagNames[i]] = stats.tag_counts[i];
    }
    j["tag_counts"] = tags;
    return j.dump(2);
}

} // namespace codemix
