#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <codemix/corpus.hpp>
#include <codemix/rng.hpp>

namespace testutil {

inline std::filesystem::path fixture_dir() { return CODEMIX_FIXTURE_DIR; }

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::vector<std::filesystem::path> fixture_corpora() {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(fixture_dir())) {
        if (entry.path().extension() == ".conll") paths.push_back(entry.path());
    }
    return paths;
}

// Quick tweet builder: tags cycle lang1/lang2 unless given.
inline codemix::Tweet make_tweet(const std::string& id, codemix::SentimentLabel sentiment,
                                 const std::vector<std::string>& words,
                                 const std::vector<codemix::LanguageTag>& tags = {}) {
    codemix::Tweet tweet;
    tweet.id = id;
    tweet.sentiment = sentiment;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const codemix::LanguageTag tag =
            tags.empty() ? (i % 2 == 0 ? codemix::LanguageTag::Lang1 : codemix::LanguageTag::Lang2)
                         : tags[i];
        tweet.tokens.push_back({words[i], tag});
    }
    return tweet;
}

} // namespace testutil
