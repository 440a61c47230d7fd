#include "codemix/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "codemix/rng.hpp"

namespace codemix {

namespace {

// Flip probability peaks at 0.3 for a balanced mix ratio and vanishes at the
// monolingual extremes, so boundary corpora contain a single language.
double flip_rate(double mix_ratio) { return 0.3 * (1.0 - std::abs(1.0 - 2.0 * mix_ratio)); }

const std::string& pick(const std::vector<std::string>& words, Rng& rng) {
    return words[static_cast<std::size_t>(rng.next_below(words.size()))];
}

} // namespace

const SyntheticLexicons& synthetic_lexicons() {
    static const SyntheticLexicons lex{
        {"the", "house", "today", "work", "coffee", "morning", "friend", "weather", "city",
         "music", "game", "book"},
        {"casa", "hoy", "trabajo", "cafe", "manana", "amigo", "tiempo", "ciudad", "musica",
         "juego", "libro", "calle"},
        {"love", "great", "happy", "amazing"},
        {"hate", "awful", "sad", "terrible"},
        {"amor", "feliz", "genial", "bonito"},
        {"odio", "triste", "horrible", "malo"},
        {"!", "?", "...", ":)", "123", "<3"},
    };
    return lex;
}

void SyntheticParams::validate() const {
    if (size < 1) throw InvalidParams("generator: size must be >= 1");
    if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) {
        throw InvalidParams("generator: mix_ratio must be in [0, 1]");
    }
    if (!(other_rate >= 0.0 && other_rate < 1.0)) {
        throw InvalidParams("generator: other_rate must be in [0, 1)");
    }
    if (min_len < 1 || max_len < min_len) {
        throw InvalidParams("generator: need 1 <= min_len <= max_len");
    }
    if (max_len > 1000) throw InvalidParams("generator: max_len is unreasonably large");
}

Corpus gen_synthetic(const SyntheticParams& params) {
    params.validate();
    const SyntheticLexicons& lex = synthetic_lexicons();
    const double flip = flip_rate(params.mix_ratio);

    Rng rng(params.seed);
    Corpus corpus;
    corpus.provenance = "synthetic";
    corpus.tweets.reserve(static_cast<std::size_t>(params.size));

    for (int i = 0; i < params.size; ++i) {
        Tweet tweet;
        tweet.id = "syn-" + std::to_string(i + 1);
        tweet.sentiment = static_cast<SentimentLabel>(rng.next_below(3));

        const int len = params.min_len +
                        static_cast<int>(rng.next_below(
                            static_cast<std::uint64_t>(params.max_len - params.min_len + 1)));
        const bool dominant_lang2 = rng.next_double() < params.mix_ratio;

        std::vector<int> content_positions;
        for (int t = 0; t < len; ++t) {
            // Position 0 is always a content token so a sentiment token can
            // be planted regardless of the filler draw.
            if (t > 0 && rng.next_double() < params.other_rate) {
                tweet.tokens.push_back(Token{pick(lex.other, rng), LanguageTag::Other});
                continue;
            }
            bool lang2 = dominant_lang2;
            if (rng.next_double() < flip) lang2 = !lang2;
            const auto& neutral = lang2 ? lex.esp_neutral : lex.eng_neutral;
            tweet.tokens.push_back(
                Token{pick(neutral, rng), lang2 ? LanguageTag::Lang2 : LanguageTag::Lang1});
            content_positions.push_back(t);
        }

        if (tweet.sentiment != SentimentLabel::Neutral) {
            auto planted = static_cast<std::size_t>(1 + rng.next_below(3));
            rng.shuffle(content_positions);
            planted = std::min(planted, content_positions.size());
            for (std::size_t p = 0; p < planted; ++p) {
                Token& token = tweet.tokens[static_cast<std::size_t>(content_positions[p])];
                const bool lang2 = token.tag == LanguageTag::Lang2;
                const bool positive = tweet.sentiment == SentimentLabel::Positive;
                const auto& words = lang2 ? (positive ? lex.esp_positive : lex.esp_negative)
                                          : (positive ? lex.eng_positive : lex.eng_negative);
                token.surface = pick(words, rng);
            }
        }
        corpus.tweets.push_back(std::move(tweet));
    }
    return corpus;
}

std::string synthetic_vocab_text(SubwordScheme scheme) {
    const SpecialPieces specials = default_specials(scheme);
    const std::string prefix =
        scheme == SubwordScheme::WordInitialMarker ? "\xE2\x96\x81" : "";

    std::string out;
    for (const auto& piece : {specials.unk, specials.cls, specials.sep, specials.mask,
                              specials.pad}) {
        out += piece;
        out += '\n';
    }
    const SyntheticLexicons& lex = synthetic_lexicons();
    for (const auto* words : {&lex.eng_neutral, &lex.esp_neutral, &lex.eng_positive,
                              &lex.eng_negative, &lex.esp_positive, &lex.esp_negative,
                              &lex.other}) {
        for (const auto& word : *words) {
            out += prefix;
            out += word;
            out += '\n';
        }
    }
    return out;
}

} // namespace codemix
