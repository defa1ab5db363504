// Command-line front end: training, evaluation, prediction, adjacency
// inspection, synthetic data generation, parameter counting, benchmarking,
// ablations and hyperparameter sweeps.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eegcn/checkpoint.hpp"
#include "eegcn/config.hpp"
#include "eegcn/corpus.hpp"
#include "eegcn/errors.hpp"
#include "eegcn/eval.hpp"
#include "eegcn/model.hpp"
#include "eegcn/train.hpp"

namespace fs = std::filesystem;
using namespace eegcn;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
    auto* c = cmd->add_option("--config", opts.config_path, "config file (key = value)");
    if (config_required) c->required();
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set alpha=5");
    cmd->add_option("--seed", opts.seed, "override the run seed");
}

ModelConfig resolve_config(const CommonOpts& opts) {
    ModelConfig cfg = opts.config_path.empty() ? ModelConfig{} : load_config(opts.config_path);
    for (const std::string& kv : opts.overrides) apply_override(cfg, kv);
    if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
    return cfg;
}

std::vector<std::string> collect_event_types(const std::vector<const std::vector<Sentence>*>& splits) {
    std::vector<std::string> types;
    for (const auto* split : splits) {
        for (const Sentence& s : *split) {
            for (const Trigger& t : s.triggers) types.push_back(t.type);
        }
    }
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());
    return types;
}

struct DataBundle {
    std::vector<Sentence> train, dev, test;
    std::vector<std::string> event_types;
};

/// Loads the corpus named in the config, or generates the synthetic one when
/// no train_path is set (or --synthetic was passed).
DataBundle resolve_data(const ModelConfig& cfg, bool force_synthetic) {
    DataBundle data;
    if (force_synthetic || cfg.train_path.empty()) {
        SyntheticCorpus syn = gen_synthetic(cfg.synthetic, cfg.seed);
        data.train = std::move(syn.train);
        data.dev = std::move(syn.dev);
        data.test = std::move(syn.test);
        data.event_types = std::move(syn.event_types);
        return data;
    }
    data.train = load_corpus(cfg.train_path, cfg.max_len);
    if (!cfg.dev_path.empty()) data.dev = load_corpus(cfg.dev_path, cfg.max_len);
    if (!cfg.test_path.empty()) data.test = load_corpus(cfg.test_path, cfg.max_len);
    data.event_types = collect_event_types({&data.train, &data.dev, &data.test});
    return data;
}

std::string timestamp_name(std::uint64_t seed) {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
    return std::string("run_") + buf + "_" + std::to_string(seed);
}

std::vector<EncodedSentence> encode_all(const std::vector<Sentence>& corpus, Model& model) {
    std::vector<EncodedSentence> out;
    out.reserve(corpus.size());
    for (const Sentence& s : corpus) {
        out.push_back(encode_sentence(s, model.vocabs(), model.tags(),
                                      model.config().allow_unk_label));
    }
    return out;
}

void apply_pretrained_embeddings(Model& model, const ModelConfig& cfg) {
    if (cfg.embeddings_path.empty()) return;
    Rng rng(Rng::splitmix(cfg.seed ^ 0xe3bedULL));
    EmbeddingLoad load =
        load_embeddings(cfg.embeddings_path, model.vocabs().words, cfg.word_dim, rng);
    for (ad::Parameter* p : model.parameters()) {
        if (p->name == "word_emb") {
            p->value = std::move(load.table);
            break;
        }
    }
    std::cerr << "loaded embeddings: " << load.covered << " words covered";
    if (load.duplicates) std::cerr << ", " << load.duplicates << " duplicate entries";
    std::cerr << std::endl;
}

int cmd_train(const CommonOpts& common, const std::string& out_flag, bool force) {
    ModelConfig cfg = resolve_config(common);
    if (!out_flag.empty()) cfg.out_dir = out_flag;
    if (cfg.train_path.empty()) {
        throw ConfigError("train requires train_path (gen-synthetic writes a ready corpus)");
    }
    if (cfg.dev_path.empty()) {
        throw ConfigError("train requires dev_path for model selection");
    }
    DataBundle data = resolve_data(cfg, /*force_synthetic=*/false);
    if (data.train.empty()) throw ConfigError("training corpus is empty");
    if (data.event_types.empty()) throw ConfigError("corpus contains no trigger types");

    fs::path out_dir = cfg.out_dir.empty() ? fs::path("runs") / timestamp_name(cfg.seed)
                                           : fs::path(cfg.out_dir);
    fs::create_directories(out_dir);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    const fs::path checkpoint_path = out_dir / "checkpoint.json";
    if (!force && (fs::exists(metrics_path) || fs::exists(checkpoint_path))) {
        throw ConfigError("refusing to overwrite " + out_dir.string() +
                          " (pass --force to allow)");
    }

    Vocabs vocabs = build_vocabs(data.train);
    Model model(cfg, std::move(vocabs), TagSet(data.event_types),
                derive_init_seed(cfg.seed));
    apply_pretrained_embeddings(model, cfg);

    std::ofstream metrics(metrics_path);
    if (!metrics) throw ArgumentError("cannot write " + metrics_path.string());
    TrainHooks hooks;
    hooks.metrics = &metrics;
    hooks.console = &std::cerr;
    TrainResult result = train_model(model, data.train, data.dev, hooks);

    save_checkpoint(checkpoint_path.string(), model, cfg.seed);
    save_config(cfg, (out_dir / "config.cfg").string());

    json summary{{"best_epoch", result.best_epoch},
                 {"best_dev_f1", result.best_dev_f1},
                 {"epochs_run", result.history.size()},
                 {"checkpoint", checkpoint_path.string()},
                 {"metrics", metrics_path.string()}};
    if (!data.test.empty()) {
        std::vector<EncodedSentence> test_enc = encode_all(data.test, model);
        summary["test"] = score_to_json(evaluate(model, test_enc));
    }
    std::cout << summary.dump(2) << std::endl;
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path,
             const std::string& json_out) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    std::vector<Sentence> corpus = load_corpus(data_path, loaded.model.config().max_len);
    std::vector<EncodedSentence> enc = encode_all(corpus, loaded.model);
    ScoreReport report = evaluate(loaded.model, enc);
    const json j = score_to_json(report);
    std::cout << j.dump(2) << std::endl;
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ArgumentError("cannot write " + json_out);
        out << j.dump() << '\n';
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& data_path,
                const std::string& out_path) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    std::vector<Sentence> corpus = load_corpus(data_path, loaded.model.config().max_len);
    std::ofstream out(out_path);
    if (!out) throw ArgumentError("cannot write " + out_path);
    for (const Sentence& s : corpus) {
        EncodedSentence enc = encode_sentence(s, loaded.model.vocabs(), loaded.model.tags(),
                                              loaded.model.config().allow_unk_label);
        std::vector<Trigger> spans = loaded.model.predict_triggers(enc);
        json trig = json::array();
        for (const Trigger& t : spans) trig.push_back({t.start, t.end, t.type});
        out << json{{"tokens", s.tokens}, {"triggers", trig}}.dump() << '\n';
    }
    return 0;
}

int cmd_inspect(const std::string& checkpoint, const std::string& data_path,
                const std::string& out_dir_s, int layer_flag) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    Model& model = loaded.model;
    if (model.config().baseline != BaselineKind::EEGCN) {
        throw ArgumentError("inspect requires an eegcn checkpoint");
    }
    const int layers = static_cast<int>(model.config().layers);
    const int layer = layer_flag < 0 ? layers : layer_flag;
    if (layer > layers) {
        throw ArgumentError("layer " + std::to_string(layer) + " out of range (model has " +
                            std::to_string(layers) + " layers)");
    }
    std::size_t truncated = 0;
    std::vector<Sentence> corpus =
        load_corpus(data_path, model.config().max_len, &truncated);
    if (truncated) {
        std::cerr << "warning: " << truncated << " sentence(s) exceeded max_len "
                  << model.config().max_len << " and were truncated" << std::endl;
    }
    fs::path out_dir(out_dir_s);
    fs::create_directories(out_dir);

    json all = json::array();
    for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
        const Sentence& s = corpus[idx];
        EncodedSentence enc = encode_sentence(s, model.vocabs(), model.tags(),
                                              model.config().allow_unk_label);
        ad::Tape tape;
        Model::Forward f = model.forward(tape, enc, /*training=*/false);
        const Tensor relevance =
            relevance_matrix(f.e_layers.at(static_cast<std::size_t>(layer)).value());
        const std::size_t n = s.size();

        const fs::path csv_path = out_dir / ("relevance_" + std::to_string(idx) + ".csv");
        std::ofstream csv(csv_path);
        if (!csv) throw ArgumentError("cannot write " + csv_path.string());
        for (std::size_t j = 0; j < n; ++j) csv << (j ? "," : "") << s.tokens[j];
        csv << '\n';
        csv.precision(17);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                csv << (j ? "," : "") << relevance.at(i, j);
            }
            csv << '\n';
        }

        json matrix = json::array();
        for (std::size_t i = 0; i < n; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < n; ++j) row.push_back(relevance.at(i, j));
            matrix.push_back(row);
        }
        all.push_back({{"tokens", s.tokens}, {"layer", layer}, {"relevance", matrix}});
    }
    std::ofstream jout(out_dir / "relevance.json");
    jout << all.dump() << '\n';
    std::cout << "wrote " << corpus.size() << " relevance matrices to " << out_dir
              << std::endl;
    return 0;
}

int cmd_gen_synthetic(const CommonOpts& common, const std::string& out_dir_s) {
    ModelConfig cfg = resolve_config(common);
    fs::path out_dir(out_dir_s);
    fs::create_directories(out_dir);
    SyntheticCorpus corpus = gen_synthetic(cfg.synthetic, cfg.seed);
    save_corpus(corpus.train, (out_dir / "train.jsonl").string());
    save_corpus(corpus.dev, (out_dir / "dev.jsonl").string());
    save_corpus(corpus.test, (out_dir / "test.jsonl").string());
    cfg.train_path = (out_dir / "train.jsonl").string();
    cfg.dev_path = (out_dir / "dev.jsonl").string();
    cfg.test_path = (out_dir / "test.jsonl").string();
    save_config(cfg, (out_dir / "eegcn.cfg").string());
    std::cout << json{{"train", corpus.train.size()},
                      {"dev", corpus.dev.size()},
                      {"test", corpus.test.size()},
                      {"event_types", corpus.event_types},
                      {"config", (out_dir / "eegcn.cfg").string()}}
                     .dump(2)
              << std::endl;
    return 0;
}

int cmd_count_params(const std::string& kind_s, long long relations, long long edge_dim,
                     long long hidden) {
    BaselineKind kind;
    if (kind_s == "eegcn") kind = BaselineKind::EEGCN;
    else if (kind_s == "rgcn") kind = BaselineKind::RGCN;
    else if (kind_s == "gcn") kind = BaselineKind::GCN;
    else throw ConfigError("--kind must be eegcn|rgcn|gcn");
    std::cout << count_relation_params(kind, relations, edge_dim, hidden) << std::endl;
    return 0;
}

int cmd_bench(const CommonOpts& common, bool synthetic, std::size_t reps,
              std::size_t warmup, std::size_t batch_count, const std::string& json_out) {
    ModelConfig cfg = resolve_config(common);
    DataBundle data = resolve_data(cfg, synthetic);
    BenchConfig bench;
    bench.repetitions = reps;
    bench.warmup = warmup;
    bench.batch_count = batch_count;
    std::vector<BenchRow> rows = run_bench(cfg, data.train, data.event_types, bench);
    std::cout << bench_table(rows);
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ArgumentError("cannot write " + json_out);
        out << bench_to_json(rows).dump() << '\n';
    }
    return 0;
}

int cmd_ablate(const CommonOpts& common, bool synthetic, std::vector<std::string> switches,
               std::size_t seeds, const std::string& json_out) {
    ModelConfig cfg = resolve_config(common);
    DataBundle data = resolve_data(cfg, synthetic);
    if (switches.empty()) {
        switches = {"TDL", "NAEU", "TDL&NAEU", "MDER", "BiLSTM"};
    }
    std::vector<VariantResult> rows =
        run_ablation(cfg, switches, data.train, data.dev, data.event_types, seeds,
                     &std::cerr);
    std::printf("%-12s %6s %10s\n", "variant", "seeds", "median F1");
    json j = json::array();
    for (const VariantResult& r : rows) {
        std::printf("%-12s %6zu %10.4f\n", r.name.c_str(), r.f1s.size(), r.median_f1);
        j.push_back({{"variant", r.name}, {"seeds", r.f1s.size()},
                     {"f1s", r.f1s}, {"median_f1", r.median_f1}});
    }
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ArgumentError("cannot write " + json_out);
        out << j.dump() << '\n';
    }
    return 0;
}

int cmd_sweep(const CommonOpts& common, bool synthetic, const std::string& axis,
              std::size_t seeds, const std::string& json_out) {
    ModelConfig cfg = resolve_config(common);
    DataBundle data = resolve_data(cfg, synthetic);
    std::vector<SweepRow> rows =
        run_sweep(cfg, axis, data.train, data.dev, data.event_types, seeds, &std::cerr);
    std::printf("%-10s %6s %10s\n", axis.c_str(), "seeds", "median F1");
    json j = json::array();
    for (const SweepRow& r : rows) {
        std::printf("%-10zu %6zu %10.4f\n", r.value, r.seeds, r.median_f1);
        j.push_back({{"value", r.value}, {"seeds", r.seeds}, {"median_f1", r.median_f1}});
    }
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw ArgumentError("cannot write " + json_out);
        out << j.dump() << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event trigger detection with edge-enhanced graph convolutions"};
    app.require_subcommand(1);

    CommonOpts train_opts;
    std::string train_out;
    bool train_force = false;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train_cmd, train_opts, /*config_required=*/false);
    train_cmd->add_option("--out", train_out, "run directory (default runs/run_<ts>_<seed>)");
    train_cmd->add_flag("--force", train_force, "allow writing into an existing run dir");

    std::string eval_ckpt, eval_data, eval_json;
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a corpus");
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--data", eval_data)->required();
    eval_cmd->add_option("--json", eval_json, "also write the report to this file");

    std::string pred_ckpt, pred_data, pred_out;
    auto* pred_cmd = app.add_subcommand("predict", "emit predicted trigger spans as JSONL");
    pred_cmd->add_option("--checkpoint", pred_ckpt)->required();
    pred_cmd->add_option("--data", pred_data)->required();
    pred_cmd->add_option("--out", pred_out)->required();

    std::string ins_ckpt, ins_data, ins_out;
    int ins_layer = -1;
    auto* ins_cmd = app.add_subcommand("inspect", "export relation relevance matrices");
    ins_cmd->add_option("--checkpoint", ins_ckpt)->required();
    ins_cmd->add_option("--data", ins_data)->required();
    ins_cmd->add_option("--out", ins_out)->required();
    ins_cmd->add_option("--layer", ins_layer, "0 = initial adjacency, default last layer");

    CommonOpts gen_opts;
    std::string gen_out;
    auto* gen_cmd = app.add_subcommand("gen-synthetic", "generate a synthetic corpus");
    add_common(gen_cmd, gen_opts, /*config_required=*/false);
    gen_cmd->add_option("--out", gen_out)->required();

    std::string cp_kind;
    long long cp_rel = 0, cp_edge = 0, cp_hidden = 0;
    auto* cp_cmd = app.add_subcommand("count-params", "relation-related parameter counts");
    cp_cmd->add_option("--kind", cp_kind, "eegcn|rgcn|gcn")->required();
    cp_cmd->add_option("--relations", cp_rel)->required();
    cp_cmd->add_option("--edge-dim", cp_edge);
    cp_cmd->add_option("--hidden", cp_hidden);

    CommonOpts bench_opts;
    bool bench_syn = false;
    std::size_t bench_reps = 10, bench_warmup = 3, bench_batches = 4;
    std::string bench_json;
    auto* bench_cmd = app.add_subcommand("bench", "training/inference throughput per model");
    add_common(bench_cmd, bench_opts, /*config_required=*/false);
    bench_cmd->add_flag("--synthetic", bench_syn, "bench on the synthetic corpus");
    bench_cmd->add_option("--reps", bench_reps);
    bench_cmd->add_option("--warmup", bench_warmup);
    bench_cmd->add_option("--batches", bench_batches);
    bench_cmd->add_option("--json", bench_json);

    CommonOpts abl_opts;
    bool abl_syn = false;
    std::vector<std::string> abl_switches;
    std::size_t abl_seeds = 5;
    std::string abl_json;
    auto* abl_cmd = app.add_subcommand("ablate", "retrain with components switched off");
    add_common(abl_cmd, abl_opts, /*config_required=*/false);
    abl_cmd->add_flag("--synthetic", abl_syn);
    abl_cmd->add_option("--switches", abl_switches,
                        "subset of TDL NAEU TDL&NAEU MDER BiLSTM (default all)");
    abl_cmd->add_option("--seeds", abl_seeds, "models per variant (median reported)");
    abl_cmd->add_option("--json", abl_json);

    CommonOpts sweep_opts;
    bool sweep_syn = false;
    std::string sweep_axis, sweep_json;
    std::size_t sweep_seeds = 5;
    auto* sweep_cmd = app.add_subcommand("sweep", "train across edge_dim or layer counts");
    add_common(sweep_cmd, sweep_opts, /*config_required=*/false);
    sweep_cmd->add_flag("--synthetic", sweep_syn);
    sweep_cmd->add_option("--axis", sweep_axis, "edge_dim|layers")->required();
    sweep_cmd->add_option("--seeds", sweep_seeds);
    sweep_cmd->add_option("--json", sweep_json);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(train_opts, train_out, train_force);
        if (*eval_cmd) return cmd_eval(eval_ckpt, eval_data, eval_json);
        if (*pred_cmd) return cmd_predict(pred_ckpt, pred_data, pred_out);
        if (*ins_cmd) return cmd_inspect(ins_ckpt, ins_data, ins_out, ins_layer);
        if (*gen_cmd) return cmd_gen_synthetic(gen_opts, gen_out);
        if (*cp_cmd) return cmd_count_params(cp_kind, cp_rel, cp_edge, cp_hidden);
        if (*bench_cmd) {
            return cmd_bench(bench_opts, bench_syn, bench_reps, bench_warmup,
                             bench_batches, bench_json);
        }
        if (*abl_cmd) return cmd_ablate(abl_opts, abl_syn, abl_switches, abl_seeds, abl_json);
        if (*sweep_cmd) return cmd_sweep(sweep_opts, sweep_syn, sweep_axis, sweep_seeds,
                                         sweep_json);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return 2;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << std::endl;
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
