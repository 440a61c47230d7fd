#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "codemix/corpus.hpp"
#include "codemix/error.hpp"

namespace codemix {

// Continuation conventions for the two tokenizer families: word-internal
// `##` prefixes (WordPiece-style) or a word-initial `▁` marker
// (SentencePiece-style).
enum class SubwordScheme { ContinuationPrefix, WordInitialMarker };

std::string to_string(SubwordScheme scheme);

struct SpecialPieces {
    std::string unk, cls, sep, mask, pad;
};

class VocabError : public Error {
public:
    using Error::Error;
};

class DuplicatePiece : public VocabError {
public:
    explicit DuplicatePiece(int line_no)
        : VocabError("duplicate vocab piece at line " + std::to_string(line_no)),
          line_no_(line_no) {}
    int line_no() const { return line_no_; }

private:
    int line_no_;
};

class MissingSpecial : public VocabError {
public:
    explicit MissingSpecial(const std::string& name)
        : VocabError("vocab is missing special piece " + name), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

// An ordered piece table; file order defines the dense index space.
class SubwordVocab {
public:
    SubwordVocab(std::vector<std::string> pieces, SubwordScheme scheme, SpecialPieces special);

    SubwordScheme scheme() const { return scheme_; }
    const std::vector<std::string>& pieces() const { return pieces_; }
    int size() const { return static_cast<int>(pieces_.size()); }
    const SpecialPieces& special() const { return special_; }

    bool contains(const std::string& piece) const { return index_.count(piece) != 0; }
    int index_of(const std::string& piece) const;

    int unk_index() const { return unk_index_; }
    int cls_index() const { return cls_index_; }
    int sep_index() const { return sep_index_; }
    int mask_index() const { return mask_index_; }
    int pad_index() const { return pad_index_; }
    bool is_special_index(int index) const;

private:
    std::vector<std::string> pieces_;
    SubwordScheme scheme_;
    SpecialPieces special_;
    std::unordered_map<std::string, int> index_;
    int unk_index_, cls_index_, sep_index_, mask_index_, pad_index_;
};

// Conventional special-piece spellings per scheme.
SpecialPieces default_specials(SubwordScheme scheme);

// One piece per line, UTF-8, file order defines indices.
SubwordVocab load_vocab(const std::string& text, SubwordScheme scheme);
SubwordVocab load_vocab_file(const std::string& path, SubwordScheme scheme);

struct Piece {
    std::string piece;
    int index = -1;
    int word_index = -1;
    bool is_first_of_word = false;

    bool operator==(const Piece&) const = default;
};

struct PieceSequence {
    std::vector<Piece> pieces;
};

struct NftWordBreakdown {
    std::string word;
    std::int64_t pieces = 0;
};

// Tokenizer-quality counts: non_first_tokens == piece_count - word_count
// under the convention that an unknown word collapses to exactly one piece.
struct NftReport {
    std::int64_t word_count = 0;
    std::int64_t piece_count = 0;
    std::int64_t non_first_tokens = 0;
    std::vector<NftWordBreakdown> per_word; // filled on demand
};

// Rule-based word tokenizer for raw text: split on Unicode whitespace, then
// split leading/trailing punctuation runs off as separate words. Chunks
// starting with '#' or '@' are kept whole, as are internal-punctuation words
// (contractions).
std::vector<std::string> word_tokenize(const std::string& text);

// Greedy longest-match-first segmentation of one word. Unmatchable words and
// words longer than 100 characters produce the single unk piece.
std::vector<std::string> tokenize_word(const SubwordVocab& vocab, const std::string& word);

// Per-word segmentation over the tweet's token surfaces, with word_index and
// is_first_of_word bookkeeping. No special pieces are inserted.
PieceSequence tokenize_tweet(const SubwordVocab& vocab, const Tweet& tweet);

NftReport nft_analysis(const SubwordVocab& vocab, const Corpus& corpus,
                       bool with_per_word = false);

std::string to_json_string(const NftReport& report);

} // namespace codemix
