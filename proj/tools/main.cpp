// Command-line front end: corpus stats, subword analysis, training,
// prediction, evaluation, splitting, and synthetic data generation.

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <codemix/corpus.hpp>
#include <codemix/evaluation.hpp>
#include <codemix/models.hpp>
#include <codemix/subword.hpp>
#include <codemix/synthetic.hpp>
#include <codemix/training.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

codemix::SubwordScheme scheme_from(const std::string& name) {
    return name == "sentencepiece" ? codemix::SubwordScheme::WordInitialMarker
                                   : codemix::SubwordScheme::ContinuationPrefix;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw codemix::Error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw codemix::Error("cannot write file: " + path.string());
    out << text;
    if (!out) throw codemix::Error("write failed: " + path.string());
}

fs::path ensure_out_dir(const std::string& dir) {
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw codemix::Error("cannot create output directory: " + dir);
    return p;
}

std::string timestamp_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Reports printed to stdout carry schema_version; file copies additionally
// carry a generated_at timestamp (the only field allowed to vary between
// identical runs).
Json with_schema(Json body) {
    if (body.contains("schema_version")) return body;
    Json j;
    j["schema_version"] = 1;
    j.update(body);
    return j;
}

std::string file_report(const Json& report) {
    Json j;
    j["schema_version"] = report.value("schema_version", 1);
    j["generated_at"] = timestamp_utc();
    for (auto it = report.begin(); it != report.end(); ++it) {
        if (it.key() != "schema_version") j[it.key()] = it.value();
    }
    return j.dump(2) + "\n";
}

void print_report(const Json& report) { std::cout << report.dump(2) << "\n"; }

Json parse_config_file(const std::string& path) {
    if (path.empty()) return Json::object();
    Json root;
    try {
        root = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw codemix::Error("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!root.is_object()) throw codemix::Error("config file must hold a JSON object");
    for (const auto& [key, value] : root.items()) {
        (void)value;
        if (key != "model" && key != "train" && key != "pretrain") {
            throw codemix::Error("unknown config key '" + key + "' (expected model/train/pretrain)");
        }
    }
    return root;
}

struct StatsOpts {
    std::string corpus;
    std::string out;
};

struct TokenizeOpts {
    std::string corpus;
    std::string vocab;
    std::string scheme;
    bool per_word = false;
    std::string out;
};

struct SplitOpts {
    std::string corpus;
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainOpts {
    std::string corpus;
    std::string dev;
    std::string vocab;
    std::string scheme;
    std::string model = "transformer";
    std::string objective = "cls";
    std::string config;
    std::uint64_t seed = 0;
    std::string checkpoint;
    bool two_step = false;
    double train_fraction = 0.9;
    std::string out;
};

struct PredictOpts {
    std::string corpus;
    std::string vocab;
    std::string scheme;
    std::string checkpoint;
    int batch_size = 32;
    std::string out;
};

struct EvaluateOpts {
    std::string gold;
    std::string pred;
    bool grouped = false;
    double dominant_threshold = 0.75;
    double other_threshold = 0.4;
    bool exclusive = false;
    bool ratio_over_all_tokens = false;
    std::string out;
};

struct SyntheticOpts {
    std::uint64_t size = 100;
    std::uint64_t seed = 0;
    double mix_ratio = 0.5;
    double other_rate = 0.0;
    std::uint64_t min_len = 4;
    std::uint64_t max_len = 12;
    std::string scheme = "wordpiece";
    std::string out;
};

void run_stats(const StatsOpts& o) {
    const codemix::Corpus corpus = codemix::load_corpus_file(o.corpus);
    const Json report = with_schema(Json::parse(codemix::to_json_string(codemix::corpus_stats(corpus))));
    if (!o.out.empty()) {
        const fs::path dir = ensure_out_dir(o.out);
        write_file(dir / "stats.json", file_report(report));
    }
    print_report(report);
}

void run_tokenize(const TokenizeOpts& o) {
    const codemix::Corpus corpus = codemix::load_corpus_file(o.corpus);
    const codemix::SubwordVocab vocab = codemix::load_vocab_file(o.vocab, scheme_from(o.scheme));
    const codemix::NftReport nft = codemix::nft_analysis(vocab, corpus, o.per_word);
    const Json report = with_schema(Json::parse(codemix::to_json_string(nft)));
    if (!o.out.empty()) {
        const fs::path dir = ensure_out_dir(o.out);
        write_file(dir / "nft.json", file_report(report));
    }
    print_report(report);
}

void run_split(const SplitOpts& o) {
    const codemix::Corpus corpus = codemix::load_corpus_file(o.corpus);
    const auto [train, dev] = codemix::split_corpus(corpus, o.train_fraction, o.seed);
    const fs::path dir = ensure_out_dir(o.out);
    const fs::path train_path = dir / "train.conll";
    const fs::path dev_path = dir / "dev.conll";
    codemix::save_corpus_file(train, train_path.string());
    codemix::save_corpus_file(dev, dev_path.string());
    Json report;
    report["schema_version"] = 1;
    report["train_count"] = train.tweets.size();
    report["dev_count"] = dev.tweets.size();
    report["train_path"] = train_path.string();
    report["dev_path"] = dev_path.string();
    print_report(report);
}

void run_train(const TrainOpts& o, const CLI::App* cmd) {
    const codemix::Corpus full = codemix::load_corpus_file(o.corpus);
    const codemix::SubwordVocab vocab = codemix::load_vocab_file(o.vocab, scheme_from(o.scheme));

    const Json root = parse_config_file(o.config);
    Json model_obj = root.value("model", Json::object());
    Json train_obj = root.value("train", Json::object());
    Json pretrain_obj = root.value("pretrain", Json::object());
    if (!model_obj.is_object() || !train_obj.is_object() || !pretrain_obj.is_object()) {
        throw codemix::Error("config sections model/train/pretrain must be JSON objects");
    }

    if (!model_obj.contains("vocab_size")) model_obj["vocab_size"] = vocab.size();
    const bool blstm = o.model == "blstm";
    if (blstm && !train_obj.contains("preset")) train_obj["preset"] = "blstm-paper";
    // Explicit flags win over the config file.
    if (cmd->count("--seed") > 0) train_obj["seed"] = o.seed;
    if (cmd->count("--objective") > 0 && !o.two_step) train_obj["objective"] = o.objective;
    if (!o.checkpoint.empty()) {
        train_obj["init"] = "checkpoint";
        train_obj["checkpoint"] = o.checkpoint;
    }

    const codemix::ModelConfig config = codemix::config_from_json(model_obj.dump());

    codemix::Corpus train_corpus;
    codemix::Corpus dev_corpus;
    if (!o.dev.empty()) {
        train_corpus = full;
        dev_corpus = codemix::load_corpus_file(o.dev);
    } else {
        const std::uint64_t split_seed =
            train_obj.contains("seed") ? train_obj["seed"].get<std::uint64_t>() : o.seed;
        std::tie(train_corpus, dev_corpus) = codemix::split_corpus(full, o.train_fraction, split_seed);
    }

    const fs::path dir = ensure_out_dir(o.out);
    const fs::path checkpoint_path = dir / "checkpoint.json";

    if (o.two_step) {
        const fs::path lm_checkpoint = dir / "lm_checkpoint.json";
        if (!pretrain_obj.contains("seed") && train_obj.contains("seed")) {
            pretrain_obj["seed"] = train_obj["seed"];
        }
        pretrain_obj["objective"] = "mlm";
        train_obj["objective"] = "cls";
        train_obj["init"] = "checkpoint";
        train_obj["checkpoint"] = lm_checkpoint.string();
        const codemix::TrainPlan plan_lm = codemix::plan_from_json(pretrain_obj.dump());
        const codemix::TrainPlan plan_cls = codemix::plan_from_json(train_obj.dump());
        const codemix::TwoStepResult result =
            codemix::two_step_finetune(config, plan_lm, plan_cls, train_corpus, dev_corpus, vocab,
                                       lm_checkpoint.string(), checkpoint_path.string());
        Json lm_report = Json::parse(codemix::to_json_string(result.lm_log));
        Json cls_report = Json::parse(codemix::to_json_string(result.cls_log));
        write_file(dir / "lm_runlog.json", file_report(lm_report));
        write_file(dir / "runlog.json", file_report(cls_report));
        lm_report.erase("schema_version");
        cls_report.erase("schema_version");
        Json combined;
        combined["schema_version"] = 1;
        combined["pretrain"] = lm_report;
        combined["finetune"] = cls_report;
        print_report(combined);
        return;
    }

    const codemix::TrainPlan plan = codemix::plan_from_json(train_obj.dump());
    const codemix::ModelKind kind =
        blstm ? codemix::ModelKind::Blstm : codemix::ModelKind::Transformer;
    const codemix::TrainResult result = codemix::train(kind, config, plan, train_corpus, dev_corpus,
                                                       vocab, checkpoint_path.string());
    const Json report = Json::parse(codemix::to_json_string(result.log));
    write_file(dir / "runlog.json", file_report(report));
    print_report(report);
}

void run_predict(const PredictOpts& o) {
    const codemix::Corpus corpus = codemix::load_corpus_file(o.corpus);
    const codemix::SubwordVocab vocab = codemix::load_vocab_file(o.vocab, scheme_from(o.scheme));
    const codemix::Checkpoint ckpt = codemix::load_checkpoint_file(o.checkpoint);
    const std::vector<codemix::SentimentLabel> preds =
        codemix::predict(ckpt, corpus, vocab, o.batch_size);
    const std::string tsv = codemix::serialize_predictions(corpus, preds);
    if (!o.out.empty()) {
        const fs::path dir = ensure_out_dir(o.out);
        write_file(dir / "predictions.tsv", tsv);
    }
    std::cout << tsv;
}

void run_evaluate(const EvaluateOpts& o) {
    const codemix::Corpus gold = codemix::load_corpus_file(o.gold);
    const std::vector<codemix::SentimentLabel> pred =
        codemix::parse_predictions(read_file(o.pred), gold);
    std::vector<codemix::SentimentLabel> gold_labels;
    gold_labels.reserve(gold.tweets.size());
    for (const auto& tweet : gold.tweets) gold_labels.push_back(tweet.sentiment);

    const codemix::EvalReport overall =
        codemix::metrics(codemix::confusion(gold_labels, pred));
    std::map<codemix::LanguageGroup, codemix::EvalReport> groups;
    Json report;
    std::string csv;
    if (o.grouped) {
        codemix::GroupThresholds thresholds;
        thresholds.dominant = o.dominant_threshold;
        thresholds.other = o.other_threshold;
        thresholds.inclusive = !o.exclusive;
        thresholds.ratio_over_all_tokens = o.ratio_over_all_tokens;
        groups = codemix::grouped_report(gold_labels, pred, gold.tweets, thresholds);
        report = with_schema(Json::parse(codemix::to_json_string(overall, groups)));
        csv = codemix::to_csv_string(overall, groups);
    } else {
        report = with_schema(Json::parse(codemix::to_json_string(overall)));
        csv = codemix::to_csv_string(overall);
    }
    if (!o.out.empty()) {
        const fs::path dir = ensure_out_dir(o.out);
        write_file(dir / "report.json", file_report(report));
        write_file(dir / "report.csv", csv);
    }
    print_report(report);
}

void run_synthetic(const SyntheticOpts& o) {
    codemix::SyntheticParams params;
    params.size = static_cast<std::size_t>(o.size);
    params.seed = o.seed;
    params.mix_ratio = o.mix_ratio;
    params.other_rate = o.other_rate;
    params.min_len = static_cast<int>(o.min_len);
    params.max_len = static_cast<int>(o.max_len);
    const codemix::Corpus corpus = codemix::gen_synthetic(params);
    const std::string vocab_text = codemix::synthetic_vocab_text(scheme_from(o.scheme));
    const fs::path dir = ensure_out_dir(o.out);
    const fs::path corpus_path = dir / "synthetic.conll";
    const fs::path vocab_path = dir / "vocab.txt";
    codemix::save_corpus_file(corpus, corpus_path.string());
    write_file(vocab_path, vocab_text);
    const codemix::SubwordVocab vocab =
        codemix::load_vocab(vocab_text, scheme_from(o.scheme));
    Json report;
    report["schema_version"] = 1;
    report["tweet_count"] = corpus.tweets.size();
    report["vocab_size"] = vocab.size();
    report["corpus_path"] = corpus_path.string();
    report["vocab_path"] = vocab_path.string();
    print_report(report);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"code-mixed sentiment analysis toolkit"};
    app.set_version_flag("--version", "codemix 0.1.0");
    app.require_subcommand(1);

    const std::vector<std::string> schemes{"wordpiece", "sentencepiece"};

    StatsOpts stats;
    CLI::App* stats_cmd = app.add_subcommand("stats", "Corpus statistics");
    stats_cmd->add_option("--corpus", stats.corpus, "CoNLL-style corpus file")->required();
    stats_cmd->add_option("--out", stats.out, "Output directory for stats.json");
    stats_cmd->callback([&] { run_stats(stats); });

    TokenizeOpts tok;
    CLI::App* tok_cmd = app.add_subcommand("tokenize-analyze", "Subword fragmentation analysis");
    tok_cmd->add_option("--corpus", tok.corpus, "CoNLL-style corpus file")->required();
    tok_cmd->add_option("--vocab", tok.vocab, "Subword vocabulary file")->required();
    tok_cmd->add_option("--scheme", tok.scheme, "Subword scheme")
        ->required()
        ->check(CLI::IsMember(schemes));
    tok_cmd->add_flag("--per-word", tok.per_word, "Include per-word piece counts");
    tok_cmd->add_option("--out", tok.out, "Output directory for nft.json");
    tok_cmd->callback([&] { run_tokenize(tok); });

    SplitOpts split;
    CLI::App* split_cmd = app.add_subcommand("split", "Deterministic train/dev split");
    split_cmd->add_option("--corpus", split.corpus, "CoNLL-style corpus file")->required();
    split_cmd->add_option("--train-fraction", split.train_fraction, "Train share in (0,1)")
        ->capture_default_str();
    split_cmd->add_option("--seed", split.seed, "Shuffle seed")->capture_default_str();
    split_cmd->add_option("--out", split.out, "Output directory")->required();
    split_cmd->callback([&] { run_split(split); });

    TrainOpts train;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a sentiment model");
    train_cmd->add_option("--corpus", train.corpus, "Training corpus")->required();
    train_cmd->add_option("--dev", train.dev, "Held-out corpus (default: split from --corpus)");
    train_cmd->add_option("--vocab", train.vocab, "Subword vocabulary file")->required();
    train_cmd->add_option("--scheme", train.scheme, "Subword scheme")
        ->required()
        ->check(CLI::IsMember(schemes));
    train_cmd->add_option("--model", train.model, "Model kind")
        ->capture_default_str()
        ->check(CLI::IsMember({"transformer", "blstm"}));
    CLI::Option* objective_opt =
        train_cmd->add_option("--objective", train.objective, "Training objective")
            ->capture_default_str()
            ->check(CLI::IsMember({"mlm", "cls"}));
    train_cmd->add_option("--config", train.config, "JSON config (model/train/pretrain sections)");
    train_cmd->add_option("--seed", train.seed, "Run seed (overrides config)")
        ->capture_default_str();
    CLI::Option* checkpoint_opt = train_cmd->add_option(
        "--checkpoint", train.checkpoint, "Warm-start encoder from this checkpoint");
    CLI::Option* two_step_opt = train_cmd->add_flag(
        "--two-step", train.two_step, "Masked-LM step followed by classifier fine-tuning");
    two_step_opt->excludes(checkpoint_opt);
    two_step_opt->excludes(objective_opt);
    train_cmd->add_option("--train-fraction", train.train_fraction,
                          "Train share when --dev is absent")
        ->capture_default_str();
    train_cmd->add_option("--out", train.out, "Output directory")->required();
    train_cmd->callback([&] {
        if (train.model == "blstm" && train.two_step) {
            throw CLI::ValidationError("train", "--two-step requires --model transformer");
        }
        if (train.model == "blstm" && train.objective == "mlm") {
            throw CLI::ValidationError("train", "the baseline has no masked-LM objective");
        }
        run_train(train, train_cmd);
    });

    PredictOpts predict;
    CLI::App* predict_cmd = app.add_subcommand("predict", "Label a corpus with a checkpoint");
    predict_cmd->add_option("--corpus", predict.corpus, "Corpus to label")->required();
    predict_cmd->add_option("--vocab", predict.vocab, "Subword vocabulary file")->required();
    predict_cmd->add_option("--scheme", predict.scheme, "Subword scheme")
        ->required()
        ->check(CLI::IsMember(schemes));
    predict_cmd->add_option("--checkpoint", predict.checkpoint, "Trained checkpoint")->required();
    predict_cmd->add_option("--batch-size", predict.batch_size, "Prediction batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    predict_cmd->add_option("--out", predict.out, "Output directory for predictions.tsv");
    predict_cmd->callback([&] { run_predict(predict); });

    EvaluateOpts evaluate;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Score predictions against gold labels");
    eval_cmd->add_option("--gold", evaluate.gold, "Gold corpus")->required();
    eval_cmd->add_option("--pred", evaluate.pred, "Predictions TSV")->required();
    eval_cmd->add_flag("--grouped", evaluate.grouped, "Also report per language group");
    eval_cmd->add_option("--dominant-threshold", evaluate.dominant_threshold,
                         "Language dominance ratio")
        ->capture_default_str();
    eval_cmd->add_option("--other-threshold", evaluate.other_threshold,
                         "Mixed/other share for the Other group")
        ->capture_default_str();
    eval_cmd->add_flag("--exclusive", evaluate.exclusive, "Strict threshold comparison");
    eval_cmd->add_flag("--ratio-over-all-tokens", evaluate.ratio_over_all_tokens,
                       "Dominance over all tokens instead of language tokens");
    eval_cmd->add_option("--out", evaluate.out, "Output directory for report.json / report.csv");
    eval_cmd->callback([&] { run_evaluate(evaluate); });

    SyntheticOpts synth;
    CLI::App* synth_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic corpus");
    synth_cmd->add_option("--size", synth.size, "Number of tweets")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--mix-ratio", synth.mix_ratio, "Language mixing ratio in [0,1]")
        ->capture_default_str();
    synth_cmd->add_option("--other-rate", synth.other_rate, "Rate of Other-tag fillers")
        ->capture_default_str();
    synth_cmd->add_option("--min-len", synth.min_len, "Minimum tokens per tweet")
        ->capture_default_str();
    synth_cmd->add_option("--max-len", synth.max_len, "Maximum tokens per tweet")
        ->capture_default_str();
    synth_cmd->add_option("--scheme", synth.scheme, "Vocabulary scheme to emit")
        ->capture_default_str()
        ->check(CLI::IsMember(schemes));
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();
    synth_cmd->callback([&] { run_synthetic(synth); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
