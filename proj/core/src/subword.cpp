#include "codemix/subword.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "utf8.hpp"

namespace codemix {

namespace {

constexpr const char* kContinuationPrefix = "##";
constexpr const char* kWordInitialMarker = "\xE2\x96\x81"; // U+2581
constexpr std::size_t kMaxWordChars = 100;

} // namespace

std::string to_string(SubwordScheme scheme) {
    return scheme == SubwordScheme::ContinuationPrefix ? "wordpiece" : "sentencepiece";
}

SpecialPieces default_specials(SubwordScheme scheme) {
    if (scheme == SubwordScheme::ContinuationPrefix) {
        return {"[UNK]", "[CLS]", "[SEP]", "[MASK]", "[PAD]"};
    }
    return {"<unk>", "<cls>", "<sep>", "<mask>", "<pad>"};
}

SubwordVocab::SubwordVocab(std::vector<std::string> pieces, SubwordScheme scheme,
                           SpecialPieces special)
    : pieces_(std::move(pieces)), scheme_(scheme), special_(std::move(special)) {
    index_.reserve(pieces_.size());
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        if (!index_.emplace(pieces_[i], static_cast<int>(i)).second) {
            throw DuplicatePiece(static_cast<int>(i) + 1);
        }
    }
    const auto require = [this](const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw MissingSpecial(name);
        return it->second;
    };
    unk_index_ = require(special_.unk);
    cls_index_ = require(special_.cls);
    sep_index_ = require(special_.sep);
    mask_index_ = require(special_.mask);
    pad_index_ = require(special_.pad);
}

int SubwordVocab::index_of(const std::string& piece) const {
    auto it = index_.find(piece);
    if (it == index_.end()) return -1;
    return it->second;
}

bool SubwordVocab::is_special_index(int index) const {
    return index == unk_index_ || index == cls_index_ || index == sep_index_ ||
           index == mask_index_ || index == pad_index_;
}

SubwordVocab load_vocab(const std::string& text, SubwordScheme scheme) {
    std::vector<std::string> pieces;
    std::string current;
    int line_no = 1;
    const auto flush = [&](bool final_line) {
        if (current.empty()) {
            if (!final_line) throw VocabError("empty vocab piece at line " + std::to_string(line_no));
            return;
        }
        pieces.push_back(current);
        current.clear();
    };
    for (char c : text) {
        if (c == '\n') {
            if (!current.empty() && current.back() == '\r') current.pop_back();
            flush(false);
            ++line_no;
        } else {
            current.push_back(c);
        }
    }
    flush(true);
    return SubwordVocab(std::move(pieces), scheme, default_specials(scheme));
}

SubwordVocab load_vocab_file(const std::string& path, SubwordScheme scheme) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vocab file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_vocab(buf.str(), scheme);
}

std::vector<std::string> word_tokenize(const std::string& text) {
    using namespace detail;
    const Utf8View view = decode_utf8(text);
    const std::size_t n = view.cps.size();

    std::vector<std::string> words;
    const auto substr = [&](std::size_t from_cp, std::size_t to_cp) {
        return text.substr(view.offsets[from_cp], view.offsets[to_cp] - view.offsets[from_cp]);
    };

    std::size_t i = 0;
    while (i < n) {
        while (i < n && is_unicode_space(view.cps[i])) ++i;
        if (i == n) break;
        std::size_t j = i;
        while (j < n && !is_unicode_space(view.cps[j])) ++j;

        // chunk is [i, j)
        if (j - i >= 2 && (view.cps[i] == '#' || view.cps[i] == '@')) {
            words.push_back(substr(i, j));
            i = j;
            continue;
        }
        std::size_t lead = i;
        while (lead < j && is_punct(view.cps[lead])) ++lead;
        if (lead == j) {
            words.push_back(substr(i, j)); // all punctuation, one run
            i = j;
            continue;
        }
        std::size_t trail = j;
        while (trail > lead && is_punct(view.cps[trail - 1])) --trail;
        if (lead > i) words.push_back(substr(i, lead));
        words.push_back(substr(lead, trail));
        if (trail < j) words.push_back(substr(trail, j));
        i = j;
    }
    return words;
}

std::vector<std::string> tokenize_word(const SubwordVocab& vocab, const std::string& word) {
    using namespace detail;
    const bool marker_scheme = vocab.scheme() == SubwordScheme::WordInitialMarker;
    const std::string target = marker_scheme ? kWordInitialMarker + word : word;
    const Utf8View view = decode_utf8(target);
    const std::size_t n = view.cps.size();
    const std::size_t plain_chars = marker_scheme ? n - 1 : n;

    const std::vector<std::string> unk{vocab.special().unk};
    if (plain_chars == 0 || plain_chars > kMaxWordChars) return unk;

    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < n) {
        std::string match;
        std::size_t match_end = start;
        for (std::size_t end = n; end > start; --end) {
            std::string candidate =
                target.substr(view.offsets[start], view.offsets[end] - view.offsets[start]);
            if (!marker_scheme && start > 0) candidate = kContinuationPrefix + candidate;
            if (vocab.contains(candidate)) {
                match = std::move(candidate);
                match_end = end;
                break;
            }
        }
        if (match_end == start) return unk;
        pieces.push_back(std::move(match));
        start = match_end;
    }
    return pieces;
}

PieceSequence tokenize_tweet(const SubwordVocab& vocab, const Tweet& tweet) {
    PieceSequence seq;
    for (std::size_t w = 0; w < tweet.tokens.size(); ++w) {
        std::vector<std::string> pieces = tokenize_word(vocab, tweet.tokens[w].surface);
        for (std::size_t p = 0; p < pieces.size(); ++p) {
            Piece piece;
            piece.index = vocab.index_of(pieces[p]);
            piece.piece = std::move(pieces[p]);
            piece.word_index = static_cast<int>(w);
            piece.is_first_of_word = (p == 0);
            seq.pieces.push_back(std::move(piece));
        }
    }
    return seq;
}

NftReport nft_analysis(const SubwordVocab& vocab, const Corpus& corpus, bool with_per_word) {
    NftReport report;
    for (const Tweet& tweet : corpus.tweets) {
        for (const Token& token : tweet.tokens) {
            const auto pieces = tokenize_word(vocab, token.surface);
            const auto count = static_cast<std::int64_t>(pieces.size());
            report.word_count += 1;
            report.piece_count += count;
            if (with_per_word) {
                report.per_word.push_back(NftWordBreakdown{token.surface, count});
            }
        }
    }
    report.non_first_tokens = report.piece_count - report.word_count;
    return report;
}

std::string to_json_string(const NftReport& report) {
    nlohmann::ordered_json j;
    j["word_count"] = report.word_count;
    j["piece_count"] = report.piece_count;
    j["non_first_tokens"] = report.non_first_tokens;
    if (!report.per_word.empty()) {
        nlohmann::ordered_json words = nlohmann::ordered_json::array();
        for (const auto& w : report.per_word) {
            words.push_back({{"word", w.word}, {"pieces", w.pieces}});
        }
        j["per_word"] = words;
    }
    return j.dump(2);
}

} // namespace codemix
