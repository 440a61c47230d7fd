#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <codemix/checkpoint.hpp>
#include <codemix/models.hpp>
#include <codemix/rng.hpp>
#include <codemix/subword.hpp>

#include "test_util.hpp"

using namespace codemix;
using testutil::make_tweet;

namespace {

std::vector<std::string> with_specials(SubwordScheme scheme, std::vector<std::string> pieces) {
    const SpecialPieces sp = default_specials(scheme);
    std::vector<std::string> all{sp.unk, sp.cls, sp.sep, sp.mask, sp.pad};
    all.insert(all.end(), pieces.begin(), pieces.end());
    return all;
}

SubwordVocab make_vocab(std::vector<std::string> pieces) {
    const auto scheme = SubwordScheme::ContinuationPrefix;
    return SubwordVocab(with_specials(scheme, std::move(pieces)), scheme,
                        default_specials(scheme));
}

// Every surface below is a whole vocab piece, so each word encodes to one id.
const std::vector<std::string> kWords = {"good", "bad", "meh", "uno", "dos", "tres"};

SubwordVocab test_vocab() { return make_vocab(kWords); }

ModelConfig tiny_config(int vocab_size) {
    ModelConfig c;
    c.num_blocks = 2;
    c.num_heads = 2;
    c.hidden_size = 8;
    c.ffn_size = 12;
    c.vocab_size = vocab_size;
    c.max_seq_len = 16;
    c.dropout_rate = 0.1;
    return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    return worst;
}

Tensor snapshot(const Tensor& t) {
    return Tensor(t.shape(), std::vector<double>(t.data(), t.data() + t.size()));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int i = 0; i < a.size(); ++i) {
        if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
}

std::vector<std::pair<std::string, Tensor>> encoder_subset(
    const std::vector<std::pair<std::string, Tensor>>& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& p : params) {
        if (is_encoder_param(p.first)) out.push_back(p);
    }
    return out;
}

} // namespace

TEST_SUITE("models") {

TEST_CASE("model config validation and json round-trip") {
    ModelConfig c = tiny_config(11);
    CHECK_NOTHROW(c.validate());

    const ModelConfig back = config_from_json(config_to_json(c));
    CHECK(back == c);

    auto broken = [&](auto&& mutate) {
        ModelConfig bad = c;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), Error);
    };
    broken([](ModelConfig& m) { m.num_blocks = 0; });
    broken([](ModelConfig& m) { m.num_heads = 0; });
    broken([](ModelConfig& m) { m.hidden_size = 0; });
    broken([](ModelConfig& m) { m.hidden_size = 9; }); // not divisible by heads
    broken([](ModelConfig& m) { m.ffn_size = 0; });
    broken([](ModelConfig& m) { m.vocab_size = 0; });
    broken([](ModelConfig& m) { m.max_seq_len = 1; });
    broken([](ModelConfig& m) { m.num_classes = 2; });
    broken([](ModelConfig& m) { m.dropout_rate = -0.1; });
    broken([](ModelConfig& m) { m.dropout_rate = 1.0; });

    CHECK_THROWS_AS(config_from_json("{\"vocab_size\": 10, \"typo\": 1}"), Error);
    CHECK_THROWS_AS(config_from_json("not json"), Error);
    CHECK_THROWS_AS(config_from_json("{}"), Error); // vocab_size stays 0
    CHECK_THROWS_AS(config_from_json("{\"hidden_size\": \"big\", \"vocab_size\": 10}"), Error);
}

TEST_CASE("encode_batch lays out cls/sep/padding and targets") {
    const SubwordVocab vocab = test_vocab();
    const int good = vocab.index_of("good"), uno = vocab.index_of("uno"),
              bad = vocab.index_of("bad");
    REQUIRE(good >= 0);

    const std::vector<Tweet> tweets = {
        make_tweet("a", SentimentLabel::Positive, {"good", "uno"}),
        make_tweet("b", SentimentLabel::Negative, {"bad"}),
    };
    const EncodedBatch batch = encode_batch(vocab, tweets, 16);

    CHECK(batch.batch == 2);
    CHECK(batch.seq == 4); // cls + 2 pieces + sep
    CHECK(batch.cls_index == vocab.cls_index());
    CHECK(batch.sep_index == vocab.sep_index());
    CHECK(batch.pad_index == vocab.pad_index());
    CHECK(batch.mask_index == vocab.mask_index());

    CHECK(batch.piece_at(0, 0) == vocab.cls_index());
    CHECK(batch.piece_at(0, 1) == good);
    CHECK(batch.piece_at(0, 2) == uno);
    CHECK(batch.piece_at(0, 3) == vocab.sep_index());
    CHECK(batch.piece_at(1, 0) == vocab.cls_index());
    CHECK(batch.piece_at(1, 1) == bad);
    CHECK(batch.piece_at(1, 2) == vocab.sep_index());
    CHECK(batch.piece_at(1, 3) == vocab.pad_index());

    const std::vector<double> want_mask = {1, 1, 1, 1, 1, 1, 1, 0};
    CHECK(batch.mask == want_mask);
    CHECK(batch.class_targets == std::vector<int>{2, 0});
    CHECK(batch.mlm_targets.empty());
}

TEST_CASE("encode_batch truncates at max_seq_len") {
    const SubwordVocab vocab = test_vocab();
    const std::vector<Tweet> tweets = {
        make_tweet("a", SentimentLabel::Neutral, {"good", "bad", "meh", "uno", "dos"}),
    };
    const EncodedBatch batch = encode_batch(vocab, tweets, 4);
    CHECK(batch.seq == 4);
    CHECK(batch.piece_at(0, 0) == vocab.cls_index());
    CHECK(batch.piece_at(0, 1) == vocab.index_of("good"));
    CHECK(batch.piece_at(0, 2) == vocab.index_of("bad"));
    CHECK(batch.piece_at(0, 3) == vocab.sep_index());

    CHECK_THROWS_AS(encode_batch(vocab, std::span<const Tweet>{}, 16), Error);
    CHECK_THROWS_AS(encode_batch(vocab, tweets, 1), Error);
}

TEST_CASE("transformer parameter accounting matches the layout") {
    const SubwordVocab vocab = test_vocab();
    const ModelConfig c = tiny_config(vocab.size());
    TransformerModel model(c, 1);

    // Counted off the parameter list, not the closed form under test.
    const std::int64_t H = c.hidden_size, F = c.ffn_size, V = c.vocab_size;
    std::int64_t want = V * H + c.max_seq_len * H;        // embeddings
    want += c.num_blocks * (4 * (H * H + H)               // attention projections
                            + 2 * (H + H)                 // two layer norms
                            + (H * F + F) + (F * H + H)); // ffn
    want += H * H + H;                                    // pooler
    want += H * 3 + 3;                                    // classifier head
    want += H * H + H + V;                                // mlm transform + tied bias
    CHECK(model.param_count() == want);
    CHECK(TransformerModel::expected_param_count(c) == want);
    CHECK(model.param_names().size() == 2 + 16 * c.num_blocks + 2 + 2 + 3);

    ModelConfig big = c;
    big.num_blocks = 3;
    big.num_heads = 4;
    big.ffn_size = 20;
    big.max_seq_len = 19;
    TransformerModel bigger(big, 1);
    CHECK(bigger.param_count() == TransformerModel::expected_param_count(big));

    // Norm scales start at one, shifts and biases at zero.
    const Tensor& gamma = model.param("block0.ln1.gamma");
    const Tensor& beta = model.param("block0.ln2.beta");
    for (int i = 0; i < gamma.size(); ++i) CHECK(gamma.data()[i] == 1.0);
    for (int i = 0; i < beta.size(); ++i) CHECK(beta.data()[i] == 0.0);
    const Tensor& bq = model.param("block1.attn.bq");
    for (int i = 0; i < bq.size(); ++i) CHECK(bq.data()[i] == 0.0);

    CHECK_THROWS_AS(model.param("no.such.tensor"), Error);
}

TEST_CASE("transformer init is seed-deterministic") {
    const ModelConfig c = tiny_config(11);
    TransformerModel a(c, 42), b(c, 42), other(c, 43);
    bool all_equal = true, any_diff = false;
    for (const auto& name : a.param_names()) {
        all_equal = all_equal && bitwise_equal(a.param(name), b.param(name));
        any_diff = any_diff || !bitwise_equal(a.param(name), other.param(name));
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("classifier logits are deterministic at inference") {
    const SubwordVocab vocab = test_vocab();
    TransformerModel model(tiny_config(vocab.size()), 7);
    const std::vector<Tweet> tweets = {
        make_tweet("a", SentimentLabel::Positive, {"good", "uno", "dos"}),
        make_tweet("b", SentimentLabel::Negative, {"bad"}),
    };
    const EncodedBatch batch = encode_batch(vocab, tweets, 16);

    const Tensor first = model.classify(batch);
    const Tensor second = model.classify(batch);
    CHECK(first.shape() == std::vector<int>{2, 3});
    CHECK(bitwise_equal(first, second));
}

TEST_CASE("padding rows never change a tweet's logits") {
    const SubwordVocab vocab = test_vocab();
    TransformerModel model(tiny_config(vocab.size()), 7);

    const Tweet small = make_tweet("s", SentimentLabel::Neutral, {"meh", "uno"});
    const Tweet large =
        make_tweet("l", SentimentLabel::Positive, {"good", "dos", "tres", "uno", "bad", "meh"});

    const EncodedBatch alone = encode_batch(vocab, std::vector<Tweet>{small}, 16);
    const EncodedBatch padded = encode_batch(vocab, std::vector<Tweet>{small, large}, 16);
    REQUIRE(padded.seq > alone.seq); // the companion forces pad columns onto `small`

    const Tensor logits_alone = model.classify(alone);
    const Tensor logits_padded = model.classify(padded);
    for (int k = 0; k < 3; ++k) {
        CHECK(logits_padded.at({0, k}) == logits_alone.at({0, k}));
    }
}

TEST_CASE("batch order never changes per-tweet logits") {
    const SubwordVocab vocab = test_vocab();
    TransformerModel model(tiny_config(vocab.size()), 19);
    const std::vector<Tweet> abc = {
        make_tweet("a", SentimentLabel::Positive, {"good", "uno"}),
        make_tweet("b", SentimentLabel::Negative, {"bad", "dos", "tres"}),
        make_tweet("c", SentimentLabel::Neutral, {"meh"}),
    };
    const std::vector<Tweet> cab = {abc[2], abc[0], abc[1]};

    const Tensor straight = model.classify(encode_batch(vocab, abc, 16));
    const Tensor rotated = model.classify(encode_batch(vocab, cab, 16));
    for (int k = 0; k < 3; ++k) {
        CHECK(straight.at({0, k}) == rotated.at({1, k}));
        CHECK(straight.at({1, k}) == rotated.at({2, k}));
        CHECK(straight.at({2, k}) == rotated.at({0, k}));
    }
}

TEST_CASE("dropout is active only when a generator is supplied") {
    const SubwordVocab vocab = test_vocab();
    ModelConfig c = tiny_config(vocab.size());
    c.dropout_rate = 0.3;
    TransformerModel model(c, 5);
    const EncodedBatch batch = encode_batch(
        vocab, std::vector<Tweet>{make_tweet("a", SentimentLabel::Positive, {"good", "uno"})}, 16);

    const Tensor eval_run = model.classify(batch);

    Rng r1(99), r2(99), r3(100);
    const Tensor drop1 = model.classify(batch, nullptr, &r1);
    const Tensor drop2 = model.classify(batch, nullptr, &r2);
    const Tensor drop3 = model.classify(batch, nullptr, &r3);
    CHECK(bitwise_equal(drop1, drop2));     // same draw stream
    CHECK(!bitwise_equal(drop1, eval_run)); // masking visibly perturbs
    CHECK(!bitwise_equal(drop1, drop3));    // a different stream lands elsewhere

    ModelConfig no_drop = c;
    no_drop.dropout_rate = 0.0;
    TransformerModel plain(no_drop, 5);
    Rng r4(99);
    CHECK(bitwise_equal(plain.classify(batch, nullptr, &r4), plain.classify(batch)));
}

TEST_CASE("mlm loss agrees with its own logits") {
    const SubwordVocab vocab = test_vocab();
    TransformerModel model(tiny_config(vocab.size()), 3);
    const std::vector<Tweet> tweets = {
        make_tweet("a", SentimentLabel::Positive, {"good", "uno", "dos"}),
        make_tweet("b", SentimentLabel::Negative, {"bad", "meh"}),
    };
    EncodedBatch batch = encode_batch(vocab, tweets, 16);

    CHECK_THROWS_AS(model.mlm(batch), NoMaskedPositions);

    batch.mlm_targets.assign(static_cast<std::size_t>(batch.batch) * batch.seq, -1);
    CHECK_THROWS_AS(model.mlm(batch), NoMaskedPositions); // all ignored

    // Predict the original piece at row 0 / column 2 and row 1 / column 1.
    const int t0 = batch.piece_at(0, 2), t1 = batch.piece_at(1, 1);
    batch.mlm_targets[2] = t0;
    batch.mlm_targets[static_cast<std::size_t>(batch.seq) + 1] = t1;
    batch.pieces[2] = batch.mask_index;

    const MlmOutput out = model.mlm(batch);
    CHECK(out.logits.shape() == std::vector<int>{2, batch.seq, vocab.size()});
    CHECK(out.loss.size() == 1);
    CHECK(out.loss.item() > 0.0);

    auto nll = [&](int row, int col, int target) {
        double mx = out.logits.at({row, col, 0});
        for (int vtx = 1; vtx < vocab.size(); ++vtx) {
            mx = std::max(mx, out.logits.at({row, col, vtx}));
        }
        double sum = 0.0;
        for (int vtx = 0; vtx < vocab.size(); ++vtx) {
            sum += std::exp(out.logits.at({row, col, vtx}) - mx);
        }
        return mx + std::log(sum) - out.logits.at({row, col, target});
    };
    const double want = 0.5 * (nll(0, 2, t0) + nll(1, 1, t1));
    CHECK(std::abs(out.loss.item() - want) <= 1e-10);

    EncodedBatch short_targets = batch;
    short_targets.mlm_targets.pop_back();
    CHECK_THROWS_AS(model.mlm(short_targets), Error);
}

TEST_CASE("transformer checkpoints reproduce behaviour exactly") {
    const SubwordVocab vocab = test_vocab();
    TransformerModel model(tiny_config(vocab.size()), 21);
    const EncodedBatch batch = encode_batch(
        vocab, std::vector<Tweet>{make_tweet("a", SentimentLabel::Neutral, {"uno", "meh"})}, 16);

    const Checkpoint ckpt = model.to_checkpoint();
    CHECK(ckpt.model_kind == "transformer");
    TransformerModel revived = TransformerModel::from_checkpoint(ckpt);
    CHECK(revived.config() == model.config());
    CHECK(parameter_digest(revived.named_params()) == parameter_digest(model.named_params()));
    CHECK(bitwise_equal(revived.classify(batch), model.classify(batch)));

    Checkpoint trimmed = ckpt;
    trimmed.params.pop_back();
    CHECK_THROWS_AS(TransformerModel::from_checkpoint(trimmed), CheckpointIncompatible);

    Checkpoint renamed = ckpt;
    renamed.params[0].first = "bogus";
    CHECK_THROWS_AS(TransformerModel::from_checkpoint(renamed), CheckpointIncompatible);

    Checkpoint reshaped = ckpt;
    reshaped.params[0].second = Tensor({1, 1});
    CHECK_THROWS_AS(TransformerModel::from_checkpoint(reshaped), CheckpointIncompatible);

    BlstmModel blstm(tiny_config(vocab.size()), 21);
    CHECK_THROWS_AS(TransformerModel::from_checkpoint(blstm.to_checkpoint()),
                    CheckpointIncompatible);
    CHECK_THROWS_AS(BlstmModel::from_checkpoint(ckpt), CheckpointIncompatible);
}

TEST_CASE("load_encoder imports everything except the heads") {
    CHECK(is_encoder_param("embed.pieces"));
    CHECK(is_encoder_param("block0.attn.wq"));
    CHECK(is_encoder_param("pooler.w"));
    CHECK(!is_encoder_param("head.cls.w"));
    CHECK(!is_encoder_param("head.mlm.bias"));

    const ModelConfig c = tiny_config(11);
    TransformerModel donor(c, 11), target(c, 22);
    const Checkpoint ckpt = donor.to_checkpoint();

    std::vector<std::pair<std::string, Tensor>> heads_before;
    for (const auto& name : target.param_names()) {
        if (!is_encoder_param(name)) heads_before.emplace_back(name, snapshot(target.param(name)));
    }

    target.load_encoder(ckpt);
    for (const auto& name : target.param_names()) {
        if (is_encoder_param(name)) {
            CHECK(bitwise_equal(target.param(name), donor.param(name)));
        }
    }
    for (const auto& [name, kept] : heads_before) {
        CHECK(bitwise_equal(target.param(name), kept));
    }
    // Head biases start at zero in both models; only the weights can differ.
    CHECK(!bitwise_equal(target.param("head.cls.w"), donor.param("head.cls.w")));
    CHECK(!bitwise_equal(target.param("head.mlm.w"), donor.param("head.mlm.w")));
    CHECK(parameter_digest(target.encoder_params()) ==
          parameter_digest(encoder_subset(ckpt.params)));
    CHECK(parameter_digest(target.named_params()) != parameter_digest(donor.named_params()));

    ModelConfig other = c;
    other.hidden_size = 16;
    other.ffn_size = 24;
    TransformerModel mismatched(other, 1);
    CHECK_THROWS_AS(mismatched.load_encoder(ckpt), CheckpointIncompatible);

    BlstmModel blstm(c, 1);
    CHECK_THROWS_AS(target.load_encoder(blstm.to_checkpoint()), CheckpointIncompatible);

    Checkpoint partial = ckpt;
    std::erase_if(partial.params, [](const auto& p) { return p.first == "pooler.b"; });
    CHECK_THROWS_AS(target.load_encoder(partial), CheckpointIncompatible);

    Checkpoint renamed = ckpt;
    renamed.params[0].first = "embed.bogus";
    CHECK_THROWS_AS(target.load_encoder(renamed), CheckpointIncompatible);
}

TEST_CASE("classify rejects batches longer than max_seq_len") {
    const SubwordVocab vocab = test_vocab();
    ModelConfig c = tiny_config(vocab.size());
    c.max_seq_len = 4;
    TransformerModel model(c, 1);
    const EncodedBatch batch = encode_batch(
        vocab,
        std::vector<Tweet>{
            make_tweet("a", SentimentLabel::Neutral, {"good", "bad", "meh", "uno", "dos"})},
        16);
    REQUIRE(batch.seq > c.max_seq_len);
    CHECK_THROWS_AS(model.classify(batch), Error);
}

TEST_CASE("blstm parameter accounting") {
    const SubwordVocab vocab = test_vocab(); // 11 pieces
    ModelConfig c = tiny_config(vocab.size());
    c.hidden_size = 4;
    BlstmModel model(c, 2);

    const std::int64_t V = c.vocab_size, H = 4, half = 2;
    const std::int64_t want = 2 * V * half                                    // two tables
                              + 2 * (H * 4 * half + half * 4 * half + 4 * half) // two directions
                              + H * 3 + 3;                                    // output layer
    CHECK(model.param_count() == want);
    CHECK(BlstmModel::expected_param_count(c) == want);
    CHECK(model.param("embed.a").shape() == std::vector<int>{static_cast<int>(V), 2});
    CHECK(model.param("fwd.w").shape() == std::vector<int>{4, 8});
    CHECK(model.param("bwd.u").shape() == std::vector<int>{2, 8});

    ModelConfig odd = c;
    odd.hidden_size = 5;
    odd.num_heads = 1;
    CHECK_THROWS_AS(BlstmModel(odd, 2), Error);
}

TEST_CASE("blstm matches a hand-rolled lstm") {
    const SubwordVocab vocab = test_vocab();
    ModelConfig c = tiny_config(vocab.size());
    c.hidden_size = 4;
    BlstmModel model(c, 17);

    const std::vector<Tweet> tweets = {
        make_tweet("a", SentimentLabel::Positive, {"good", "uno", "tres"}),
        make_tweet("b", SentimentLabel::Negative, {"bad"}),
    };
    const EncodedBatch batch = encode_batch(vocab, tweets, 16);
    const Tensor logits = model.classify(batch);

    const int B = batch.batch, S = batch.seq, H = 4, half = 2;
    auto flat = [&](const std::string& name) {
        const Tensor& t = model.param(name);
        return std::vector<double>(t.data(), t.data() + t.size());
    };
    const auto ea = flat("embed.a"), eb = flat("embed.b");
    const auto ow = flat("out.w"), ob = flat("out.b");
    auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };

    for (int b = 0; b < B; ++b) {
        std::vector<double> x(static_cast<std::size_t>(S) * H);
        for (int t = 0; t < S; ++t) {
            const int piece = batch.piece_at(b, t);
            for (int j = 0; j < half; ++j) {
                x[static_cast<std::size_t>(t) * H + j] = ea[static_cast<std::size_t>(piece) * half + j];
                x[static_cast<std::size_t>(t) * H + half + j] =
                    eb[static_cast<std::size_t>(piece) * half + j];
            }
        }
        std::vector<double> feat(H);
        for (const bool reversed : {false, true}) {
            const std::string prefix = reversed ? "bwd." : "fwd.";
            const auto w = flat(prefix + "w");
            const auto u = flat(prefix + "u");
            const auto bias = flat(prefix + "b");
            std::vector<double> h(half, 0.0), cell(half, 0.0);
            for (int i = 0; i < S; ++i) {
                const int t = reversed ? S - 1 - i : i;
                if (batch.mask[static_cast<std::size_t>(b) * S + t] == 0.0) continue;
                std::vector<double> z(4 * half);
                for (int j = 0; j < 4 * half; ++j) {
                    double acc = bias[static_cast<std::size_t>(j)];
                    for (int k = 0; k < H; ++k) {
                        acc += x[static_cast<std::size_t>(t) * H + k] *
                               w[static_cast<std::size_t>(k) * 4 * half + j];
                    }
                    for (int k = 0; k < half; ++k) {
                        acc += h[static_cast<std::size_t>(k)] *
                               u[static_cast<std::size_t>(k) * 4 * half + j];
                    }
                    z[static_cast<std::size_t>(j)] = acc;
                }
                for (int j = 0; j < half; ++j) {
                    const double in_gate = sig(z[static_cast<std::size_t>(j)]);
                    const double forget = sig(z[static_cast<std::size_t>(half + j)]);
                    const double cand = std::tanh(z[static_cast<std::size_t>(2 * half + j)]);
                    const double out_gate = sig(z[static_cast<std::size_t>(3 * half + j)]);
                    cell[static_cast<std::size_t>(j)] =
                        forget * cell[static_cast<std::size_t>(j)] + in_gate * cand;
                    h[static_cast<std::size_t>(j)] =
                        out_gate * std::tanh(cell[static_cast<std::size_t>(j)]);
                }
            }
            for (int j = 0; j < half; ++j) feat[static_cast<std::size_t>((reversed ? half : 0) + j)] = h[j];
        }
        for (int k = 0; k < 3; ++k) {
            double acc = ob[static_cast<std::size_t>(k)];
            for (int j = 0; j < H; ++j) {
                acc += feat[static_cast<std::size_t>(j)] * ow[static_cast<std::size_t>(j) * 3 + k];
            }
            CHECK(std::abs(logits.at({b, k}) - acc) <= 1e-10);
        }
    }
}

TEST_CASE("blstm padding and batch order invariance") {
    const SubwordVocab vocab = test_vocab();
    ModelConfig c = tiny_config(vocab.size());
    c.hidden_size = 6;
    c.num_heads = 1;
    BlstmModel model(c, 23);

    const Tweet small = make_tweet("s", SentimentLabel::Neutral, {"meh"});
    const Tweet large =
        make_tweet("l", SentimentLabel::Positive, {"good", "dos", "tres", "uno", "bad"});

    const Tensor alone = model.classify(encode_batch(vocab, std::vector<Tweet>{small}, 16));
    const Tensor padded =
        model.classify(encode_batch(vocab, std::vector<Tweet>{small, large}, 16));
    const Tensor swapped =
        model.classify(encode_batch(vocab, std::vector<Tweet>{large, small}, 16));
    for (int k = 0; k < 3; ++k) {
        CHECK(padded.at({0, k}) == alone.at({0, k}));
        CHECK(swapped.at({1, k}) == padded.at({0, k}));
        CHECK(swapped.at({0, k}) == padded.at({1, k}));
    }

    const Checkpoint ckpt = model.to_checkpoint();
    BlstmModel revived = BlstmModel::from_checkpoint(ckpt);
    CHECK(max_abs_diff(revived.classify(encode_batch(vocab, std::vector<Tweet>{small}, 16)),
                       alone) == 0.0);
}

TEST_CASE("blstm word-vector loading") {
    const SubwordVocab vocab = test_vocab();
    ModelConfig c = tiny_config(vocab.size());
    c.hidden_size = 4; // slot width 2
    BlstmModel model(c, 3);

    const std::string text = "good 1.5 -2.5\nunlisted 9 9\r\nbad 0.25 0.5\n\n";
    CHECK(model.load_word_vectors(0, vocab, text) == 2); // "unlisted" is skipped

    const Tensor& table = model.param("embed.a");
    const int good = vocab.index_of("good"), bad = vocab.index_of("bad");
    CHECK(table.at({good, 0}) == 1.5);
    CHECK(table.at({good, 1}) == -2.5);
    CHECK(table.at({bad, 0}) == 0.25);
    CHECK(table.at({bad, 1}) == 0.5);

    // Slot 1 is independent.
    CHECK(model.load_word_vectors(1, vocab, "meh 7 8\n") == 1);
    CHECK(model.param("embed.b").at({vocab.index_of("meh"), 0}) == 7.0);
    CHECK(model.param("embed.a").at({vocab.index_of("meh"), 0}) != 7.0);

    CHECK(model.load_word_vectors(0, vocab, "") == 0);
    CHECK_THROWS_AS(model.load_word_vectors(2, vocab, "good 1 2\n"), Error);
    CHECK_THROWS_AS(model.load_word_vectors(0, vocab, "good 1 2 3\n"), Error);
    CHECK_THROWS_AS(model.load_word_vectors(0, vocab, "good 1\n"), Error);

    const SubwordVocab bigger = make_vocab({"good", "bad", "meh", "uno", "dos", "tres", "extra"});
    CHECK_THROWS_AS(model.load_word_vectors(0, bigger, "good 1 2\n"), Error);
}

} // TEST_SUITE
