#include "codemix/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace codemix {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kLayerNormEps = 1e-12;
constexpr double kAttentionMaskBias = -1e9;
constexpr double kInitStddev = 0.02;

Tensor normal_tensor(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    double* p = t.data();
    for (int i = 0; i < t.size(); ++i) p[i] = rng.normal(0.0, stddev);
    return t;
}

Tensor apply_dropout(const Tensor& x, double rate, Rng* rng) {
    if (!rng || rate <= 0.0) return x;
    std::vector<double> mask(static_cast<std::size_t>(x.size()));
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = rng->next_double() < rate ? 0.0 : keep_scale;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

// layer_norm with a learned scale and shift over the last axis.
Tensor affine_layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    return add(mul(layer_norm(x, kLayerNormEps), gamma), beta);
}

void check_batch(const EncodedBatch& batch) {
    if (batch.batch <= 0 || batch.seq <= 0) throw Error("empty batch");
    if (static_cast<int>(batch.pieces.size()) != batch.batch * batch.seq ||
        static_cast<int>(batch.mask.size()) != batch.batch * batch.seq) {
        throw Error("batch index/mask sizes are inconsistent");
    }
}

void require_kind(const Checkpoint& ckpt, const char* kind) {
    if (ckpt.model_kind != kind) {
        throw CheckpointIncompatible("model kind is '" + ckpt.model_kind + "', expected '" +
                                     kind + "'");
    }
}

} // namespace

void ModelConfig::validate() const {
    if (num_blocks < 1) throw Error("model config: num_blocks must be >= 1");
    if (num_heads < 1) throw Error("model config: num_heads must be >= 1");
    if (hidden_size < 1 || hidden_size % num_heads != 0) {
        throw Error("model config: hidden_size must be positive and divisible by num_heads");
    }
    if (ffn_size < 1) throw Error("model config: ffn_size must be >= 1");
    if (vocab_size < 1) throw Error("model config: vocab_size must be >= 1");
    if (max_seq_len < 2) throw Error("model config: max_seq_len must be >= 2");
    if (num_classes != 3) throw Error("model config: num_classes must be 3");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw Error("model config: dropout_rate must be in [0, 1)");
    }
}

std::string config_to_json(const ModelConfig& config) {
    Json j;
    j["num_blocks"] = config.num_blocks;
    j["num_heads"] = config.num_heads;
    j["hidden_size"] = config.hidden_size;
    j["ffn_size"] = config.ffn_size;
    j["vocab_size"] = config.vocab_size;
    j["max_seq_len"] = config.max_seq_len;
    j["num_classes"] = config.num_classes;
    j["dropout_rate"] = config.dropout_rate;
    return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error(std::string("model config is not valid JSON: ") + e.what());
    }
    ModelConfig config;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "num_blocks") config.num_blocks = value.get<int>();
            else if (key == "num_heads") config.num_heads = value.get<int>();
            else if (key == "hidden_size") config.hidden_size = value.get<int>();
            else if (key == "ffn_size") config.ffn_size = value.get<int>();
            else if (key == "vocab_size") config.vocab_size = value.get<int>();
            else if (key == "max_seq_len") config.max_seq_len = value.get<int>();
            else if (key == "num_classes") config.num_classes = value.get<int>();
            else if (key == "dropout_rate") config.dropout_rate = value.get<double>();
            else throw Error("unknown model config key '" + key + "'");
        }
    } catch (const Json::exception& e) {
        throw Error(std::string("bad model config value: ") + e.what());
    }
    config.validate();
    return config;
}

EncodedBatch encode_batch(const SubwordVocab& vocab, std::span<const Tweet> tweets,
                          int max_seq_len) {
    if (tweets.empty()) throw Error("encode_batch: no tweets");
    if (max_seq_len < 2) throw Error("encode_batch: max_seq_len must be >= 2");

    EncodedBatch batch;
    batch.batch = static_cast<int>(tweets.size());
    batch.cls_index = vocab.cls_index();
    batch.sep_index = vocab.sep_index();
    batch.pad_index = vocab.pad_index();
    batch.mask_index = vocab.mask_index();

    std::vector<std::vector<int>> rows;
    rows.reserve(tweets.size());
    int longest = 0;
    for (const Tweet& tweet : tweets) {
        const PieceSequence seq = tokenize_tweet(vocab, tweet);
        std::vector<int> row;
        row.reserve(seq.pieces.size() + 2);
        row.push_back(batch.cls_index);
        for (const Piece& piece : seq.pieces) {
            if (static_cast<int>(row.size()) == max_seq_len - 1) break;
            row.push_back(piece.index);
        }
        row.push_back(batch.sep_index);
        longest = std::max(longest, static_cast<int>(row.size()));
        rows.push_back(std::move(row));
        batch.class_targets.push_back(static_cast<int>(tweets[rows.size() - 1].sentiment));
    }

    batch.seq = longest;
    batch.pieces.assign(static_cast<std::size_t>(batch.batch) * batch.seq, batch.pad_index);
    batch.mask.assign(static_cast<std::size_t>(batch.batch) * batch.seq, 0.0);
    for (int r = 0; r < batch.batch; ++r) {
        for (std::size_t c = 0; c < rows[static_cast<std::size_t>(r)].size(); ++c) {
            const auto at = static_cast<std::size_t>(r) * batch.seq + c;
            batch.pieces[at] = rows[static_cast<std::size_t>(r)][c];
            batch.mask[at] = 1.0;
        }
    }
    return batch;
}

// ---- TransformerModel ------------------------------------------------

TransformerModel::TransformerModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
    config_.validate();
    const int H = config_.hidden_size;
    const int F = config_.ffn_size;
    const int V = config_.vocab_size;

    Rng rng(seed);
    auto weight = [&](std::vector<int> shape) { return normal_tensor(std::move(shape), rng, kInitStddev); };

    add_param("embed.pieces", weight({V, H}));
    add_param("embed.positions", weight({config_.max_seq_len, H}));
    for (int b = 0; b < config_.num_blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        add_param(prefix + "attn.wq", weight({H, H}));
        add_param(prefix + "attn.bq", Tensor({H}));
        add_param(prefix + "attn.wk", weight({H, H}));
        add_param(prefix + "attn.bk", Tensor({H}));
        add_param(prefix + "attn.wv", weight({H, H}));
        add_param(prefix + "attn.bv", Tensor({H}));
        add_param(prefix + "attn.wo", weight({H, H}));
        add_param(prefix + "attn.bo", Tensor({H}));
        add_param(prefix + "ln1.gamma", Tensor::full({H}, 1.0));
        add_param(prefix + "ln1.beta", Tensor({H}));
        add_param(prefix + "ffn.w1", weight({H, F}));
        add_param(prefix + "ffn.b1", Tensor({F}));
        add_param(prefix + "ffn.w2", weight({F, H}));
        add_param(prefix + "ffn.b2", Tensor({H}));
        add_param(prefix + "ln2.gamma", Tensor::full({H}, 1.0));
        add_param(prefix + "ln2.beta", Tensor({H}));
    }
    add_param("pooler.w", weight({H, H}));
    add_param("pooler.b", Tensor({H}));
    add_param("head.cls.w", weight({H, config_.num_classes}));
    add_param("head.cls.b", Tensor({config_.num_classes}));
    add_param("head.mlm.w", weight({H, H}));
    add_param("head.mlm.b", Tensor({H}));
    add_param("head.mlm.bias", Tensor({V}));
}

Tensor& TransformerModel::add_param(const std::string& name, Tensor value) {
    order_.push_back(name);
    return params_.emplace(name, std::move(value)).first->second;
}

Tensor& TransformerModel::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& TransformerModel::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(order_.size());
    for (const auto& name : order_) out.emplace_back(name, params_.at(name));
    return out;
}

std::vector<std::pair<std::string, Tensor>> TransformerModel::encoder_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& name : order_) {
        if (is_encoder_param(name)) out.emplace_back(name, params_.at(name));
    }
    return out;
}

Checkpoint TransformerModel::to_checkpoint() const {
    return Checkpoint{kKind, config_to_json(config_), named_params()};
}

TransformerModel TransformerModel::from_checkpoint(const Checkpoint& ckpt) {
    require_kind(ckpt, kKind);
    TransformerModel model(config_from_json(ckpt.config_json), 0);
    if (ckpt.params.size() != model.order_.size()) {
        throw CheckpointIncompatible("parameter count mismatch");
    }
    for (const auto& [name, tensor] : ckpt.params) {
        auto it = model.params_.find(name);
        if (it == model.params_.end()) throw CheckpointIncompatible("unknown parameter '" + name + "'");
        if (it->second.shape() != tensor.shape()) {
            throw CheckpointIncompatible("shape mismatch for '" + name + "'");
        }
        it->second = tensor;
    }
    return model;
}

void TransformerModel::load_encoder(const Checkpoint& ckpt) {
    require_kind(ckpt, kKind);
    if (config_from_json(ckpt.config_json) != config_) {
        throw CheckpointIncompatible("model config differs");
    }
    std::size_t loaded = 0;
    for (const auto& [name, tensor] : ckpt.params) {
        if (!is_encoder_param(name)) continue;
        auto it = params_.find(name);
        if (it == params_.end()) throw CheckpointIncompatible("unknown parameter '" + name + "'");
        if (it->second.shape() != tensor.shape()) {
            throw CheckpointIncompatible("shape mismatch for '" + name + "'");
        }
        it->second = tensor;
        ++loaded;
    }
    if (loaded != encoder_params().size()) {
        throw CheckpointIncompatible("checkpoint does not cover every encoder parameter");
    }
}

std::int64_t TransformerModel::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, tensor] : params_) n += tensor.size();
    return n;
}

std::int64_t TransformerModel::expected_param_count(const ModelConfig& c) {
    const std::int64_t H = c.hidden_size, F = c.ffn_size, V = c.vocab_size;
    const std::int64_t embeddings = V * H + static_cast<std::int64_t>(c.max_seq_len) * H;
    const std::int64_t per_block = 4 * (H * H + H)   // q,k,v,o projections
                                   + 2 * (2 * H)     // two affine layer norms
                                   + H * F + F       // ffn in
                                   + F * H + H;      // ffn out
    const std::int64_t pooler = H * H + H;
    const std::int64_t cls_head = H * c.num_classes + c.num_classes;
    const std::int64_t mlm_head = H * H + H + V; // transform + tied decoder bias
    return embeddings + c.num_blocks * per_block + pooler + cls_head + mlm_head;
}

void TransformerModel::prepare(Tape* tape) {
    if (!tape) {
        unbind_params();
        return;
    }
    for (const auto& name : order_) tape->watch_inplace(params_.at(name));
}

void TransformerModel::unbind_params() {
    for (auto& [name, tensor] : params_) tensor.unbind();
}

Tensor TransformerModel::encode(const EncodedBatch& batch, Rng* dropout) {
    check_batch(batch);
    const int B = batch.batch, S = batch.seq, H = config_.hidden_size;
    const int nh = config_.num_heads, dh = H / nh;
    if (S > config_.max_seq_len) throw Error("batch longer than max_seq_len");
    const double rate = config_.dropout_rate;

    Tensor x = reshape(embedding_lookup(params_.at("embed.pieces"), batch.pieces), {B, S, H});
    std::vector<int> positions(static_cast<std::size_t>(S));
    std::iota(positions.begin(), positions.end(), 0);
    x = add(x, embedding_lookup(params_.at("embed.positions"), positions));
    x = apply_dropout(x, rate, dropout);

    // Additive attention bias: 0 on attendable keys, -1e9 on padding, so the
    // softmax weight of padding underflows to exactly zero.
    std::vector<double> bias(static_cast<std::size_t>(B) * nh * S * S);
    for (int b = 0; b < B; ++b) {
        for (int h = 0; h < nh; ++h) {
            for (int i = 0; i < S; ++i) {
                for (int j = 0; j < S; ++j) {
                    bias[((static_cast<std::size_t>(b) * nh + h) * S + i) * S + j] =
                        batch.mask[static_cast<std::size_t>(b) * S + j] != 0.0
                            ? 0.0
                            : kAttentionMaskBias;
                }
            }
        }
    }
    const Tensor attn_bias({B, nh, S, S}, std::move(bias));

    for (int blk = 0; blk < config_.num_blocks; ++blk) {
        const std::string prefix = "block" + std::to_string(blk) + ".";
        auto P = [&](const char* suffix) -> const Tensor& { return params_.at(prefix + suffix); };

        auto heads = [&](Tensor t) {
            return transpose(reshape(std::move(t), {B, S, nh, dh}), {0, 2, 1, 3});
        };
        Tensor q = heads(add(matmul(x, P("attn.wq")), P("attn.bq")));
        Tensor k = heads(add(matmul(x, P("attn.wk")), P("attn.bk")));
        Tensor v = heads(add(matmul(x, P("attn.wv")), P("attn.bv")));

        Tensor scores = mul_scalar(matmul(q, transpose(k, {0, 1, 3, 2})), 1.0 / std::sqrt(dh));
        Tensor weights = softmax(add(scores, attn_bias), 3);
        Tensor ctx = reshape(transpose(matmul(weights, v), {0, 2, 1, 3}), {B, S, H});
        Tensor attn_out = apply_dropout(add(matmul(ctx, P("attn.wo")), P("attn.bo")), rate, dropout);
        x = affine_layer_norm(add(x, attn_out), P("ln1.gamma"), P("ln1.beta"));

        Tensor h = gelu(add(matmul(x, P("ffn.w1")), P("ffn.b1")));
        Tensor ffn_out = apply_dropout(add(matmul(h, P("ffn.w2")), P("ffn.b2")), rate, dropout);
        x = affine_layer_norm(add(x, ffn_out), P("ln2.gamma"), P("ln2.beta"));
    }
    return x;
}

Tensor TransformerModel::classify(const EncodedBatch& batch, Tape* tape, Rng* dropout) {
    prepare(tape);
    Tensor states = encode(batch, dropout);
    const std::vector<int> first(static_cast<std::size_t>(batch.batch), 0);
    Tensor pooled = tanh(add(matmul(select_positions(states, first), params_.at("pooler.w")),
                             params_.at("pooler.b")));
    pooled = apply_dropout(pooled, config_.dropout_rate, dropout);
    return add(matmul(pooled, params_.at("head.cls.w")), params_.at("head.cls.b"));
}

MlmOutput TransformerModel::mlm(const EncodedBatch& batch, Tape* tape, Rng* dropout) {
    check_batch(batch);
    const bool any_target =
        !batch.mlm_targets.empty() &&
        std::any_of(batch.mlm_targets.begin(), batch.mlm_targets.end(),
                    [](int t) { return t >= 0; });
    if (!any_target) throw NoMaskedPositions();
    if (static_cast<int>(batch.mlm_targets.size()) != batch.batch * batch.seq) {
        throw Error("mlm targets do not match batch dimensions");
    }

    prepare(tape);
    Tensor states = encode(batch, dropout);
    Tensor transformed =
        gelu(add(matmul(states, params_.at("head.mlm.w")), params_.at("head.mlm.b")));
    Tensor logits = add(matmul(transformed, transpose(params_.at("embed.pieces"), {1, 0})),
                        params_.at("head.mlm.bias"));
    Tensor flat = reshape(logits, {batch.batch * batch.seq, config_.vocab_size});
    Tensor loss = cross_entropy(flat, batch.mlm_targets, -1);
    return MlmOutput{std::move(logits), std::move(loss)};
}

// ---- BlstmModel ------------------------------------------------------

BlstmModel::BlstmModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    if (config_.hidden_size % 2 != 0) {
        throw Error("blstm: hidden_size must be even (two embedding slots, two directions)");
    }
    const int H = config_.hidden_size;
    const int half = H / 2;
    const int V = config_.vocab_size;

    Rng rng(seed);
    auto weight = [&](std::vector<int> shape) { return normal_tensor(std::move(shape), rng, kInitStddev); };

    add_param("embed.a", weight({V, half}));
    add_param("embed.b", weight({V, half}));
    for (const char* dir : {"fwd", "bwd"}) {
        const std::string prefix = std::string(dir) + ".";
        add_param(prefix + "w", weight({H, 4 * half}));
        add_param(prefix + "u", weight({half, 4 * half}));
        add_param(prefix + "b", Tensor({4 * half}));
    }
    add_param("out.w", weight({H, config_.num_classes}));
    add_param("out.b", Tensor({config_.num_classes}));
}

Tensor& BlstmModel::add_param(const std::string& name, Tensor value) {
    order_.push_back(name);
    return params_.emplace(name, std::move(value)).first->second;
}

Tensor& BlstmModel::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& BlstmModel::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::pair<std::string, Tensor>> BlstmModel::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(order_.size());
    for (const auto& name : order_) out.emplace_back(name, params_.at(name));
    return out;
}

Checkpoint BlstmModel::to_checkpoint() const {
    return Checkpoint{kKind, config_to_json(config_), named_params()};
}

BlstmModel BlstmModel::from_checkpoint(const Checkpoint& ckpt) {
    require_kind(ckpt, kKind);
    BlstmModel model(config_from_json(ckpt.config_json), 0);
    if (ckpt.params.size() != model.order_.size()) {
        throw CheckpointIncompatible("parameter count mismatch");
    }
    for (const auto& [name, tensor] : ckpt.params) {
        auto it = model.params_.find(name);
        if (it == model.params_.end()) throw CheckpointIncompatible("unknown parameter '" + name + "'");
        if (it->second.shape() != tensor.shape()) {
            throw CheckpointIncompatible("shape mismatch for '" + name + "'");
        }
        it->second = tensor;
    }
    return model;
}

std::int64_t BlstmModel::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, tensor] : params_) n += tensor.size();
    return n;
}

std::int64_t BlstmModel::expected_param_count(const ModelConfig& c) {
    const std::int64_t H = c.hidden_size, V = c.vocab_size, half = H / 2;
    const std::int64_t embeddings = 2 * V * half;
    const std::int64_t per_direction = H * 4 * half + half * 4 * half + 4 * half;
    const std::int64_t out = H * c.num_classes + c.num_classes;
    return embeddings + 2 * per_direction + out;
}

void BlstmModel::prepare(Tape* tape) {
    if (!tape) {
        unbind_params();
        return;
    }
    for (const auto& name : order_) tape->watch_inplace(params_.at(name));
}

void BlstmModel::unbind_params() {
    for (auto& [name, tensor] : params_) tensor.unbind();
}

Tensor BlstmModel::classify(const EncodedBatch& batch, Tape* tape) {
    check_batch(batch);
    prepare(tape);
    const int B = batch.batch, S = batch.seq, H = config_.hidden_size;
    const int half = H / 2;

    Tensor inputs = reshape(concat_last(embedding_lookup(params_.at("embed.a"), batch.pieces),
                                        embedding_lookup(params_.at("embed.b"), batch.pieces)),
                            {B, S, H});

    // Per-step masks broadcast to the state width; a masked step leaves the
    // state untouched, which makes padding exactly invisible.
    auto step_mask = [&](int t) {
        std::vector<double> m(static_cast<std::size_t>(B) * half);
        for (int b = 0; b < B; ++b) {
            const double keep = batch.mask[static_cast<std::size_t>(b) * S + t];
            std::fill_n(m.begin() + static_cast<std::size_t>(b) * half, half, keep);
        }
        Tensor keep({B, half}, m);
        for (auto& v : m) v = 1.0 - v;
        return std::pair<Tensor, Tensor>(std::move(keep), Tensor({B, half}, std::move(m)));
    };

    auto run_direction = [&](const char* dir, bool reversed) {
        const std::string prefix = std::string(dir) + ".";
        const Tensor& w = params_.at(prefix + "w");
        const Tensor& u = params_.at(prefix + "u");
        const Tensor& bias = params_.at(prefix + "b");
        Tensor h({B, half});
        Tensor c({B, half});
        for (int i = 0; i < S; ++i) {
            const int t = reversed ? S - 1 - i : i;
            Tensor xt = reshape(narrow(inputs, 1, t, 1), {B, H});
            Tensor z = add(add(matmul(xt, w), matmul(h, u)), bias);
            Tensor in_gate = sigmoid(narrow(z, 1, 0, half));
            Tensor forget = sigmoid(narrow(z, 1, half, half));
            Tensor cand = tanh(narrow(z, 1, 2 * half, half));
            Tensor out_gate = sigmoid(narrow(z, 1, 3 * half, half));
            Tensor c_new = add(mul(forget, c), mul(in_gate, cand));
            Tensor h_new = mul(out_gate, tanh(c_new));
            auto [keep, skip] = step_mask(t);
            c = add(mul(c_new, keep), mul(c, skip));
            h = add(mul(h_new, keep), mul(h, skip));
        }
        return h;
    };

    Tensor final_fwd = run_direction("fwd", false);
    Tensor final_bwd = run_direction("bwd", true);
    Tensor features = concat_last(final_fwd, final_bwd);
    return add(matmul(features, params_.at("out.w")), params_.at("out.b"));
}

int BlstmModel::load_word_vectors(int slot, const SubwordVocab& vocab, const std::string& text) {
    if (slot != 0 && slot != 1) throw Error("embedding slot must be 0 or 1");
    Tensor& table = params_.at(slot == 0 ? "embed.a" : "embed.b");
    if (vocab.size() != table.extent(0)) {
        throw Error("vocab size does not match the embedding table");
    }
    const int width = table.extent(1);

    int applied = 0;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string piece;
        fields >> piece;
        std::vector<double> values;
        double v = 0.0;
        while (fields >> v) values.push_back(v);
        if (static_cast<int>(values.size()) != width) {
            throw Error("word vector at line " + std::to_string(line_no) + " has " +
                        std::to_string(values.size()) + " values, expected " +
                        std::to_string(width));
        }
        const int index = vocab.index_of(piece);
        if (index < 0) continue;
        std::copy(values.begin(), values.end(),
                  table.data() + static_cast<std::size_t>(index) * width);
        ++applied;
    }
    return applied;
}

bool is_encoder_param(const std::string& name) { return !name.starts_with("head."); }

} // namespace codemix
