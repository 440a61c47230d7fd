#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codemix/corpus.hpp"
#include "codemix/error.hpp"
#include "codemix/subword.hpp"

namespace codemix {

class InvalidParams : public Error {
public:
    using Error::Error;
};

// Generator for code-mixed fixture corpora. Each tweet draws a dominant
// language (lang2 with probability mix_ratio); tokens follow the dominant
// language except for occasional flips, so mix_ratio 0 or 1 yields a
// monolingual corpus. Non-neutral tweets get 1-3 planted sentiment-bearing
// tokens in the language of the slot they replace.
struct SyntheticParams {
    int size = 100;
    std::uint64_t seed = 0;
    double mix_ratio = 0.5;  // share of lang2-dominant tweets
    double other_rate = 0.0; // chance of a filler token tagged `other`
    int min_len = 4;
    int max_len = 12;

    void validate() const; // throws InvalidParams
};

Corpus gen_synthetic(const SyntheticParams& params);

// The fixed word lists the generator draws from; the sentiment lists are
// disjoint from the neutral ones, so counting planted tokens recovers the
// label.
struct SyntheticLexicons {
    std::vector<std::string> eng_neutral, esp_neutral;
    std::vector<std::string> eng_positive, eng_negative;
    std::vector<std::string> esp_positive, esp_negative;
    std::vector<std::string> other;
};

const SyntheticLexicons& synthetic_lexicons();

// Whole-word vocabulary covering every token the generator can emit, plus
// the scheme's special pieces; one piece per line, loadable by load_vocab.
std::string synthetic_vocab_text(SubwordScheme scheme);

} // namespace codemix
