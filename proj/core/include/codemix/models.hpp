#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "codemix/checkpoint.hpp"
#include "codemix/corpus.hpp"
#include "codemix/error.hpp"
#include "codemix/rng.hpp"
#include "codemix/subword.hpp"
#include "codemix/tensor.hpp"

namespace codemix {

class NoMaskedPositions : public Error {
public:
    NoMaskedPositions() : Error("batch has no masked positions to predict") {}
};

struct ModelConfig {
    int num_blocks = 2;
    int num_heads = 2;
    int hidden_size = 32;
    int ffn_size = 64;
    int vocab_size = 0;
    int max_seq_len = 32;
    int num_classes = 3;
    double dropout_rate = 0.1;

    void validate() const; // throws Error on a broken invariant
    bool operator==(const ModelConfig&) const = default;
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

// A batch of tweets encoded as padded piece-index rows:
// [CLS] pieces... [SEP] [PAD]...
struct EncodedBatch {
    int batch = 0;
    int seq = 0;
    std::vector<int> pieces;        // batch*seq piece indices
    std::vector<double> mask;       // batch*seq, 1.0 = attendable, 0.0 = padding
    std::vector<int> class_targets; // one sentiment index per row
    std::vector<int> mlm_targets;   // batch*seq original indices, -1 = not predicted; empty if unset
    int cls_index = -1;
    int sep_index = -1;
    int pad_index = -1;
    int mask_index = -1;

    int piece_at(int row, int col) const { return pieces[static_cast<std::size_t>(row) * seq + col]; }
};

EncodedBatch encode_batch(const SubwordVocab& vocab, std::span<const Tweet> tweets,
                          int max_seq_len);

struct MlmOutput {
    Tensor logits; // [batch, seq, vocab]
    Tensor loss;   // scalar mean over predicted positions
};

// Post-layer-norm transformer encoder with learned positions, a tanh pooler
// over position 0, a 3-way classifier head, and an MLM head whose decoder is
// tied to the piece embeddings.
class TransformerModel {
public:
    TransformerModel(const ModelConfig& config, std::uint64_t seed);

    static constexpr const char* kKind = "transformer";
    static TransformerModel from_checkpoint(const Checkpoint& ckpt);

    const ModelConfig& config() const { return config_; }

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    const std::vector<std::string>& param_names() const { return order_; }
    std::vector<std::pair<std::string, Tensor>> named_params() const;
    std::vector<std::pair<std::string, Tensor>> encoder_params() const;

    // Overwrites encoder parameters (everything outside head.*) from a
    // checkpoint with an equal config; heads keep their current values.
    void load_encoder(const Checkpoint& ckpt);

    Checkpoint to_checkpoint() const;

    std::int64_t param_count() const;
    static std::int64_t expected_param_count(const ModelConfig& config);

    // Forward passes. A non-null tape records gradients for every parameter;
    // a non-null dropout rng enables dropout at config().dropout_rate.
    Tensor classify(const EncodedBatch& batch, Tape* tape = nullptr, Rng* dropout = nullptr);
    MlmOutput mlm(const EncodedBatch& batch, Tape* tape = nullptr, Rng* dropout = nullptr);

    void unbind_params();

private:
    Tensor encode(const EncodedBatch& batch, Rng* dropout); // [batch, seq, hidden]
    void prepare(Tape* tape);
    Tensor& add_param(const std::string& name, Tensor value);

    ModelConfig config_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
};

// Bidirectional LSTM over stacked (concatenated) piece embeddings; the
// classifier reads the concatenated final forward/backward hidden states.
// Uses hidden_size/2 per embedding slot and per direction; hidden_size must
// be even. num_heads/ffn_size/num_blocks are ignored.
class BlstmModel {
public:
    BlstmModel(const ModelConfig& config, std::uint64_t seed);

    static constexpr const char* kKind = "blstm";
    static BlstmModel from_checkpoint(const Checkpoint& ckpt);

    const ModelConfig& config() const { return config_; }

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
    const std::vector<std::string>& param_names() const { return order_; }
    std::vector<std::pair<std::string, Tensor>> named_params() const;

    Checkpoint to_checkpoint() const;

    std::int64_t param_count() const;
    static std::int64_t expected_param_count(const ModelConfig& config);

    Tensor classify(const EncodedBatch& batch, Tape* tape = nullptr);

    // Overwrites rows of embedding slot 0 or 1 from word-vector text
    // (`<piece> <v1> ... <vn>` per line); returns the number of rows set.
    int load_word_vectors(int slot, const SubwordVocab& vocab, const std::string& text);

    void unbind_params();

private:
    void prepare(Tape* tape);
    Tensor& add_param(const std::string& name, Tensor value);

    ModelConfig config_;
    std::vector<std::string> order_;
    std::map<std::string, Tensor> params_;
};

inline Tensor forward_classify(TransformerModel& model, const EncodedBatch& batch,
                               Tape* tape = nullptr, Rng* dropout = nullptr) {
    return model.classify(batch, tape, dropout);
}
inline MlmOutput forward_mlm(TransformerModel& model, const EncodedBatch& batch,
                             Tape* tape = nullptr, Rng* dropout = nullptr) {
    return model.mlm(batch, tape, dropout);
}
inline Tensor forward_blstm(BlstmModel& model, const EncodedBatch& batch, Tape* tape = nullptr) {
    return model.classify(batch, tape);
}

// True for parameters carried over by two-step fine-tuning (everything
// except the head.* group).
bool is_encoder_param(const std::string& name);

} // namespace codemix
