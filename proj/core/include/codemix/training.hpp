#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "codemix/checkpoint.hpp"
#include "codemix/corpus.hpp"
#include "codemix/error.hpp"
#include "codemix/models.hpp"
#include "codemix/subword.hpp"
#include "codemix/tensor.hpp"

namespace codemix {

class NoEligiblePositions : public Error {
public:
    NoEligiblePositions() : Error("no positions eligible for masking") {}
};

struct AdamConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction; moments are kept per parameter name.
class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig config) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::int64_t step_count() const { return t_; }

    // Applies one update in place. Every parameter must be watched on the
    // tape that produced `grads`; parameters without a gradient are stepped
    // with zero.
    void step(std::vector<std::pair<std::string, Tensor>>& params, const Gradients& grads);

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

enum class Objective { Mlm, Classification };
enum class InitKind { Random, FromCheckpoint };
enum class ModelKind { Transformer, Blstm };

std::string to_string(Objective objective);
std::string to_string(ModelKind kind);
std::optional<Objective> parse_objective(const std::string& text);   // "mlm" / "cls"
std::optional<ModelKind> parse_model_kind(const std::string& text);  // "transformer" / "blstm"

struct TrainPlan {
    Objective objective = Objective::Classification;
    int epochs = 3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double mask_rate = 0.15; // MLM only
    double lr = 1e-5;
    double adam_epsilon = 1e-8;
    InitKind init = InitKind::Random;
    std::string checkpoint_path; // required when init == FromCheckpoint
    int max_steps = 0;           // optional cap on optimizer steps, 0 = none
    bool stop_when_train_perfect = false; // classification: stop once train accuracy hits 1
    bool dropout_enabled = true;

    void validate() const;
};

// Hyperparameters the original experiments used: 3 epochs, lr 1e-5,
// Adam epsilon 1e-8, batch size 32.
TrainPlan paper_preset(Objective objective);
// Baseline recipe: lr 0.1, batch size 32, 3 epochs.
TrainPlan blstm_paper_preset();

// JSON object with TrainPlan field names, plus an optional "preset" key
// ("paper" or "blstm-paper") applied before the explicit keys.
TrainPlan plan_from_json(const std::string& text);
std::string plan_to_json(const TrainPlan& plan);

// Selects round(mask_rate * eligible) positions (min 1), where eligible
// positions are real pieces other than CLS/SEP. 80% become the mask piece,
// 10% a random non-special piece, 10% stay intact; targets record the
// original indices.
EncodedBatch apply_mlm_masking(const EncodedBatch& batch, const SubwordVocab& vocab,
                               double mask_rate, std::uint64_t seed);

struct EpochLog {
    double mean_loss = 0.0;
    double dev_metric = 0.0;       // weighted F1 (classification) or dev MLM loss
    double train_accuracy = -1.0;  // classification only; -1 otherwise
};

struct RunLog {
    std::vector<EpochLog> epochs;
    std::string dev_metric_kind; // "weighted_f1" or "mlm_loss"
    int best_epoch = -1;         // 0-based index into epochs
    double best_metric = 0.0;
    int steps = 0;
    std::string checkpoint_path; // where the best checkpoint was written, if anywhere
    // Two-step verification: set when init == FromCheckpoint.
    std::uint64_t loaded_encoder_digest = 0;
    std::uint64_t checkpoint_encoder_digest = 0;
};

std::string to_json_string(const RunLog& log);

struct TrainResult {
    RunLog log;
    Checkpoint best; // parameters of the best epoch
};

// Runs the plan: seeded shuffling per epoch, Adam updates, per-epoch dev
// evaluation, best-checkpoint retention. For the transformer with
// init == FromCheckpoint, encoder parameters are imported from the
// checkpoint (heads stay freshly initialized) and the import is verified by
// digest comparison — the two-step load semantics. The BLSTM restores whole
// checkpoints. Deterministic: identical plan + seed give identical logs.
TrainResult train(ModelKind kind, const ModelConfig& config, const TrainPlan& plan,
                  const Corpus& train_corpus, const Corpus& dev_corpus,
                  const SubwordVocab& vocab, const std::string& checkpoint_out = "");

struct TwoStepResult {
    RunLog lm_log;
    RunLog cls_log;
    Checkpoint best; // final classifier checkpoint
};

// LM-then-task fine-tuning: step 1 trains with the MLM objective, step 2
// fine-tunes a classifier whose encoder starts from step 1's best
// checkpoint. plan_cls.init must be FromCheckpoint; its checkpoint path is
// filled in from step 1's output.
TwoStepResult two_step_finetune(const ModelConfig& config, const TrainPlan& plan_lm,
                                const TrainPlan& plan_cls, const Corpus& train_corpus,
                                const Corpus& dev_corpus, const SubwordVocab& vocab,
                                const std::string& lm_checkpoint_out,
                                const std::string& cls_checkpoint_out = "");

// Argmax sentiment predictions for a corpus under a trained transformer or
// BLSTM checkpoint, batched at `batch_size`.
std::vector<SentimentLabel> predict(const Checkpoint& ckpt, const Corpus& corpus,
                                    const SubwordVocab& vocab, int batch_size = 32);

} // namespace codemix
