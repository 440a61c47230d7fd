#include "codemix/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "codemix/evaluation.hpp"

namespace codemix {

namespace {

using Json = nlohmann::ordered_json;

std::string hex_u64(std::uint64_t v) {
    char buf[17] = {};
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[v & 0xf];
        v >>= 4;
    }
    return std::string(buf, 16);
}

std::vector<Tweet> gather(const Corpus& corpus, const std::vector<int>& order, int begin,
                          int end) {
    std::vector<Tweet> out;
    out.reserve(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
        out.push_back(corpus.tweets[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    return out;
}

template <typename Model>
std::vector<SentimentLabel> predict_all(Model& model, const Corpus& corpus,
                                        const SubwordVocab& vocab, int batch_size) {
    std::vector<SentimentLabel> out;
    out.reserve(corpus.tweets.size());
    const int n = static_cast<int>(corpus.tweets.size());
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        std::span<const Tweet> chunk(corpus.tweets.data() + begin,
                                     static_cast<std::size_t>(end - begin));
        EncodedBatch eb = encode_batch(vocab, chunk, model.config().max_seq_len);
        Tensor logits = model.classify(eb);
        const int classes = logits.extent(1);
        for (int r = 0; r < logits.extent(0); ++r) {
            const double* row = logits.data() + static_cast<std::size_t>(r) * classes;
            int arg = 0;
            for (int c = 1; c < classes; ++c) {
                if (row[c] > row[arg]) arg = c;
            }
            out.push_back(static_cast<SentimentLabel>(arg));
        }
    }
    return out;
}

std::vector<SentimentLabel> gold_labels(const Corpus& corpus) {
    std::vector<SentimentLabel> gold;
    gold.reserve(corpus.tweets.size());
    for (const Tweet& t : corpus.tweets) gold.push_back(t.sentiment);
    return gold;
}

double weighted_f1_against(const Corpus& corpus, const std::vector<SentimentLabel>& pred) {
    return metrics(confusion(gold_labels(corpus), pred)).weighted_f1;
}

double accuracy_against(const Corpus& corpus, const std::vector<SentimentLabel>& pred) {
    const auto gold = gold_labels(corpus);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hits += gold[i] == pred[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double eval_dev_mlm(TransformerModel& model, const Corpus& dev, const SubwordVocab& vocab,
                    const TrainPlan& plan, std::uint64_t mask_base) {
    double weighted_sum = 0.0;
    std::int64_t total_targets = 0;
    const int n = static_cast<int>(dev.tweets.size());
    int chunk_index = 0;
    for (int begin = 0; begin < n; begin += plan.batch_size) {
        const int end = std::min(n, begin + plan.batch_size);
        std::span<const Tweet> chunk(dev.tweets.data() + begin,
                                     static_cast<std::size_t>(end - begin));
        EncodedBatch eb = encode_batch(vocab, chunk, model.config().max_seq_len);
        EncodedBatch masked = apply_mlm_masking(
            eb, vocab, plan.mask_rate,
            derive_seed(mask_base, static_cast<std::uint64_t>(chunk_index)));
        const double loss = model.mlm(masked).loss.item();
        std::int64_t k = 0;
        for (int t : masked.mlm_targets) k += t >= 0 ? 1 : 0;
        weighted_sum += loss * static_cast<double>(k);
        total_targets += k;
        ++chunk_index;
    }
    return weighted_sum / static_cast<double>(total_targets);
}

template <typename Model>
TrainResult train_impl(Model& model, const ModelConfig& config, const TrainPlan& plan,
                       const Corpus& train_corpus, const Corpus& dev_corpus,
                       const SubwordVocab& vocab, const std::string& checkpoint_out,
                       RunLog log) {
    constexpr bool is_transformer = std::is_same_v<Model, TransformerModel>;
    const bool mlm = plan.objective == Objective::Mlm;
    log.dev_metric_kind = mlm ? "mlm_loss" : "weighted_f1";

    AdamOptimizer opt(AdamConfig{plan.lr, 0.9, 0.999, plan.adam_epsilon});
    Rng shuffle_rng(derive_seed(plan.seed, 1));
    const std::uint64_t mask_base = derive_seed(plan.seed, 2);
    Rng dropout_rng(derive_seed(plan.seed, 3));
    const std::uint64_t dev_mask_base = derive_seed(plan.seed, 4);
    Rng* dropout =
        plan.dropout_enabled && config.dropout_rate > 0.0 ? &dropout_rng : nullptr;

    const int n = static_cast<int>(train_corpus.tweets.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Checkpoint best;
    double best_metric = 0.0;
    int best_epoch = -1;
    int steps = 0;
    bool stop = false;

    for (int epoch = 0; epoch < plan.epochs && !stop; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += plan.batch_size) {
            if (plan.max_steps > 0 && steps >= plan.max_steps) {
                stop = true;
                break;
            }
            const int end = std::min(n, begin + plan.batch_size);
            const std::vector<Tweet> chunk = gather(train_corpus, order, begin, end);
            EncodedBatch eb = encode_batch(vocab, chunk, config.max_seq_len);

            Tape tape;
            Tensor loss;
            if constexpr (is_transformer) {
                if (mlm) {
                    EncodedBatch masked = apply_mlm_masking(
                        eb, vocab, plan.mask_rate,
                        derive_seed(mask_base, static_cast<std::uint64_t>(steps)));
                    loss = model.mlm(masked, &tape, dropout).loss;
                } else {
                    loss = cross_entropy(model.classify(eb, &tape, dropout), eb.class_targets);
                }
            } else {
                (void)dropout;
                loss = cross_entropy(model.classify(eb, &tape), eb.class_targets);
            }
            Gradients grads = tape.backward(loss);
            auto named = model.named_params();
            opt.step(named, grads);
            model.unbind_params();

            loss_sum += loss.item();
            ++batches;
            ++steps;
        }
        if (batches == 0) break;

        EpochLog el;
        el.mean_loss = loss_sum / batches;
        if (mlm) {
            if constexpr (is_transformer) {
                el.dev_metric = eval_dev_mlm(model, dev_corpus, vocab, plan, dev_mask_base);
            }
        } else {
            el.dev_metric =
                weighted_f1_against(dev_corpus, predict_all(model, dev_corpus, vocab, plan.batch_size));
            el.train_accuracy = accuracy_against(
                train_corpus, predict_all(model, train_corpus, vocab, plan.batch_size));
        }
        log.epochs.push_back(el);

        const bool improved =
            best_epoch < 0 || (mlm ? el.dev_metric < best_metric : el.dev_metric > best_metric);
        if (improved) {
            best_metric = el.dev_metric;
            best_epoch = static_cast<int>(log.epochs.size()) - 1;
            best = model.to_checkpoint();
        }
        if (!mlm && plan.stop_when_train_perfect && el.train_accuracy >= 1.0) stop = true;
    }

    if (log.epochs.empty()) {
        throw Error("training performed no full epoch (max_steps too small?)");
    }
    log.best_epoch = best_epoch;
    log.best_metric = best_metric;
    log.steps = steps;
    if (!checkpoint_out.empty()) {
        save_checkpoint_file(best, checkpoint_out);
        log.checkpoint_path = checkpoint_out;
    }
    return TrainResult{std::move(log), std::move(best)};
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

void AdamOptimizer::step(std::vector<std::pair<std::string, Tensor>>& params,
                         const Gradients& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& [name, tensor] : params) {
        const Tensor g = grads.for_tensor(tensor);
        auto& [m, v] = moments_[name];
        if (m.empty()) {
            m.assign(static_cast<std::size_t>(tensor.size()), 0.0);
            v.assign(static_cast<std::size_t>(tensor.size()), 0.0);
        }
        if (static_cast<int>(m.size()) != tensor.size()) {
            throw ShapeMismatch("adam_step", "moment size differs for '" + name + "'");
        }
        double* p = tensor.data();
        const double* gd = g.data();
        for (int i = 0; i < tensor.size(); ++i) {
            m[static_cast<std::size_t>(i)] =
                config_.beta1 * m[static_cast<std::size_t>(i)] + (1.0 - config_.beta1) * gd[i];
            v[static_cast<std::size_t>(i)] = config_.beta2 * v[static_cast<std::size_t>(i)] +
                                             (1.0 - config_.beta2) * gd[i] * gd[i];
            const double mhat = m[static_cast<std::size_t>(i)] / c1;
            const double vhat = v[static_cast<std::size_t>(i)] / c2;
            p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    }
}

std::string to_string(Objective objective) {
    return objective == Objective::Mlm ? "mlm" : "cls";
}

std::string to_string(ModelKind kind) {
    return kind == ModelKind::Transformer ? "transformer" : "blstm";
}

std::optional<Objective> parse_objective(const std::string& text) {
    if (text == "mlm") return Objective::Mlm;
    if (text == "cls") return Objective::Classification;
    return std::nullopt;
}

std::optional<ModelKind> parse_model_kind(const std::string& text) {
    if (text == "transformer") return ModelKind::Transformer;
    if (text == "blstm") return ModelKind::Blstm;
    return std::nullopt;
}

void TrainPlan::validate() const {
    if (epochs < 1) throw Error("train plan: epochs must be >= 1");
    if (batch_size < 1) throw Error("train plan: batch_size must be >= 1");
    if (objective == Objective::Mlm && !(mask_rate > 0.0 && mask_rate < 1.0)) {
        throw Error("train plan: mask_rate must be in (0, 1) for the mlm objective");
    }
    if (!(lr > 0.0)) throw Error("train plan: lr must be positive");
    if (!(adam_epsilon > 0.0)) throw Error("train plan: adam_epsilon must be positive");
    if (max_steps < 0) throw Error("train plan: max_steps must be >= 0");
    if (init == InitKind::FromCheckpoint && checkpoint_path.empty()) {
        throw Error("train plan: init from checkpoint requires a checkpoint path");
    }
}

TrainPlan paper_preset(Objective objective) {
    TrainPlan plan;
    plan.objective = objective;
    plan.epochs = 3;
    plan.batch_size = 32;
    plan.lr = 1e-5;
    plan.adam_epsilon = 1e-8;
    return plan;
}

TrainPlan blstm_paper_preset() {
    TrainPlan plan;
    plan.objective = Objective::Classification;
    plan.epochs = 3;
    plan.batch_size = 32;
    plan.lr = 0.1;
    plan.adam_epsilon = 1e-8;
    return plan;
}

TrainPlan plan_from_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error(std::string("train plan is not valid JSON: ") + e.what());
    }
    TrainPlan plan;
    try {
        if (j.contains("preset")) {
            const auto preset = j.at("preset").get<std::string>();
            if (preset == "paper") {
                plan = paper_preset(plan.objective);
            } else if (preset == "blstm-paper") {
                plan = blstm_paper_preset();
            } else {
                throw Error("unknown train preset '" + preset + "'");
            }
        }
        for (const auto& [key, value] : j.items()) {
            if (key == "preset") continue;
            else if (key == "objective") {
                const auto parsed = parse_objective(value.get<std::string>());
                if (!parsed) throw Error("objective must be 'mlm' or 'cls'");
                plan.objective = *parsed;
            } else if (key == "epochs") plan.epochs = value.get<int>();
            else if (key == "batch_size") plan.batch_size = value.get<int>();
            else if (key == "seed") plan.seed = value.get<std::uint64_t>();
            else if (key == "mask_rate") plan.mask_rate = value.get<double>();
            else if (key == "lr") plan.lr = value.get<double>();
            else if (key == "adam_epsilon") plan.adam_epsilon = value.get<double>();
            else if (key == "init") {
                const auto init = value.get<std::string>();
                if (init == "random") plan.init = InitKind::Random;
                else if (init == "checkpoint") plan.init = InitKind::FromCheckpoint;
                else throw Error("init must be 'random' or 'checkpoint'");
            } else if (key == "checkpoint") plan.checkpoint_path = value.get<std::string>();
            else if (key == "max_steps") plan.max_steps = value.get<int>();
            else if (key == "stop_when_train_perfect") plan.stop_when_train_perfect = value.get<bool>();
            else if (key == "dropout") plan.dropout_enabled = value.get<bool>();
            else throw Error("unknown train plan key '" + key + "'");
        }
    } catch (const Json::exception& e) {
        throw Error(std::string("bad train plan value: ") + e.what());
    }
    plan.validate();
    return plan;
}

std::string plan_to_json(const TrainPlan& plan) {
    Json j;
    j["objective"] = to_string(plan.objective);
    j["epochs"] = plan.epochs;
    j["batch_size"] = plan.batch_size;
    j["seed"] = plan.seed;
    j["mask_rate"] = plan.mask_rate;
    j["lr"] = plan.lr;
    j["adam_epsilon"] = plan.adam_epsilon;
    j["init"] = plan.init == InitKind::Random ? "random" : "checkpoint";
    j["checkpoint"] = plan.checkpoint_path;
    j["max_steps"] = plan.max_steps;
    j["stop_when_train_perfect"] = plan.stop_when_train_perfect;
    j["dropout"] = plan.dropout_enabled;
    return j.dump();
}

EncodedBatch apply_mlm_masking(const EncodedBatch& batch, const SubwordVocab& vocab,
                               double mask_rate, std::uint64_t seed) {
    if (!batch.mlm_targets.empty()) throw Error("batch already carries MLM targets");
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw Error("mask_rate must be in (0, 1)");

    bool has_regular_piece = false;
    for (int i = 0; i < vocab.size(); ++i) {
        if (!vocab.is_special_index(i)) {
            has_regular_piece = true;
            break;
        }
    }
    if (!has_regular_piece) {
        throw Error("vocab has no non-special pieces for MLM replacement");
    }

    std::vector<int> eligible;
    const int total = batch.batch * batch.seq;
    for (int p = 0; p < total; ++p) {
        if (batch.mask[static_cast<std::size_t>(p)] == 0.0) continue;
        const int piece = batch.pieces[static_cast<std::size_t>(p)];
        if (piece == batch.cls_index || piece == batch.sep_index) continue;
        eligible.push_back(p);
    }
    if (eligible.empty()) throw NoEligiblePositions();

    auto k = static_cast<std::size_t>(
        std::lround(mask_rate * static_cast<double>(eligible.size())));
    k = std::clamp<std::size_t>(k, 1, eligible.size());

    Rng rng(seed);
    rng.shuffle(eligible);
    std::vector<int> selected(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(selected.begin(), selected.end());

    EncodedBatch out = batch;
    out.mlm_targets.assign(static_cast<std::size_t>(total), -1);
    for (int p : selected) {
        out.mlm_targets[static_cast<std::size_t>(p)] = batch.pieces[static_cast<std::size_t>(p)];
        const double r = rng.next_double();
        if (r < 0.8) {
            out.pieces[static_cast<std::size_t>(p)] = batch.mask_index;
        } else if (r < 0.9) {
            int replacement;
            do {
                replacement = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab.size())));
            } while (vocab.is_special_index(replacement));
            out.pieces[static_cast<std::size_t>(p)] = replacement;
        } // else: keep the original piece
    }
    return out;
}

std::string to_json_string(const RunLog& log) {
    Json j;
    j["schema_version"] = 1;
    j["dev_metric_kind"] = log.dev_metric_kind;
    Json epochs = Json::array();
    for (const EpochLog& el : log.epochs) {
        Json e;
        e["mean_loss"] = el.mean_loss;
        e["dev_metric"] = el.dev_metric;
        if (el.train_accuracy >= 0.0) e["train_accuracy"] = el.train_accuracy;
        epochs.push_back(std::move(e));
    }
    j["epochs"] = std::move(epochs);
    j["best_epoch"] = log.best_epoch;
    j["best_metric"] = log.best_metric;
    j["steps"] = log.steps;
    j["checkpoint_path"] = log.checkpoint_path;
    j["encoder_digest_loaded"] = hex_u64(log.loaded_encoder_digest);
    j["encoder_digest_checkpoint"] = hex_u64(log.checkpoint_encoder_digest);
    return j.dump(1);
}

TrainResult train(ModelKind kind, const ModelConfig& config, const TrainPlan& plan,
                  const Corpus& train_corpus, const Corpus& dev_corpus,
                  const SubwordVocab& vocab, const std::string& checkpoint_out) {
    config.validate();
    plan.validate();
    if (train_corpus.tweets.empty()) throw Error("training corpus is empty");
    if (dev_corpus.tweets.empty()) throw Error("dev corpus is empty");
    if (vocab.size() != config.vocab_size) {
        throw Error("config vocab_size (" + std::to_string(config.vocab_size) +
                    ") does not match the vocab (" + std::to_string(vocab.size()) + ")");
    }
    if (kind == ModelKind::Blstm && plan.objective == Objective::Mlm) {
        throw Error("the blstm baseline supports only the classification objective");
    }

    RunLog log;
    if (kind == ModelKind::Transformer) {
        TransformerModel model(config, derive_seed(plan.seed, 0));
        if (plan.init == InitKind::FromCheckpoint) {
            const Checkpoint ckpt = load_checkpoint_file(plan.checkpoint_path);
            model.load_encoder(ckpt);
            log.checkpoint_encoder_digest = parameter_digest(encoder_subset(ckpt.params));
            log.loaded_encoder_digest = parameter_digest(model.encoder_params());
            if (log.loaded_encoder_digest != log.checkpoint_encoder_digest) {
                throw CheckpointIncompatible("encoder digest mismatch after load");
            }
        }
        return train_impl(model, config, plan, train_corpus, dev_corpus, vocab, checkpoint_out,
                          std::move(log));
    }

    if (plan.init == InitKind::FromCheckpoint) {
        const Checkpoint ckpt = load_checkpoint_file(plan.checkpoint_path);
        BlstmModel model = BlstmModel::from_checkpoint(ckpt);
        if (model.config() != config) throw CheckpointIncompatible("model config differs");
        return train_impl(model, config, plan, train_corpus, dev_corpus, vocab, checkpoint_out,
                          std::move(log));
    }
    BlstmModel model(config, derive_seed(plan.seed, 0));
    return train_impl(model, config, plan, train_corpus, dev_corpus, vocab, checkpoint_out,
                      std::move(log));
}

TwoStepResult two_step_finetune(const ModelConfig& config, const TrainPlan& plan_lm,
                                const TrainPlan& plan_cls, const Corpus& train_corpus,
                                const Corpus& dev_corpus, const SubwordVocab& vocab,
                                const std::string& lm_checkpoint_out,
                                const std::string& cls_checkpoint_out) {
    if (plan_lm.objective != Objective::Mlm) {
        throw Error("two-step: step 1 must use the mlm objective");
    }
    if (plan_cls.objective != Objective::Classification) {
        throw Error("two-step: step 2 must use the classification objective");
    }
    if (plan_cls.init != InitKind::FromCheckpoint) {
        throw Error("two-step: step 2 must initialize from the step-1 checkpoint");
    }
    if (lm_checkpoint_out.empty()) {
        throw Error("two-step: a step-1 checkpoint path is required");
    }

    TrainResult lm =
        train(ModelKind::Transformer, config, plan_lm, train_corpus, dev_corpus, vocab,
              lm_checkpoint_out);
    TrainPlan cls = plan_cls;
    cls.checkpoint_path = lm_checkpoint_out;
    TrainResult fin = train(ModelKind::Transformer, config, cls, train_corpus, dev_corpus, vocab,
                            cls_checkpoint_out);
    return TwoStepResult{std::move(lm.log), std::move(fin.log), std::move(fin.best)};
}

std::vector<SentimentLabel> predict(const Checkpoint& ckpt, const Corpus& corpus,
                                    const SubwordVocab& vocab, int batch_size) {
    if (batch_size < 1) throw Error("predict: batch_size must be >= 1");
    if (corpus.tweets.empty()) return {};
    if (ckpt.model_kind == TransformerModel::kKind) {
        TransformerModel model = TransformerModel::from_checkpoint(ckpt);
        if (model.config().vocab_size != vocab.size()) {
            throw CheckpointIncompatible("checkpoint vocab_size does not match the vocab");
        }
        return predict_all(model, corpus, vocab, batch_size);
    }
    if (ckpt.model_kind == BlstmModel::kKind) {
        BlstmModel model = BlstmModel::from_checkpoint(ckpt);
        if (model.config().vocab_size != vocab.size()) {
            throw CheckpointIncompatible("checkpoint vocab_size does not match the vocab");
        }
        return predict_all(model, corpus, vocab, batch_size);
    }
    throw CheckpointIncompatible("unknown model kind '" + ckpt.model_kind + "'");
}

} // namespace codemix
