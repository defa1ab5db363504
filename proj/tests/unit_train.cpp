#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "eegcn/checkpoint.hpp"
#include "eegcn/errors.hpp"
#include "eegcn/train.hpp"
#include "oracles.hpp"

using namespace eegcn;

namespace {

ad::Var probs_leaf(ad::Tape& t, std::vector<std::vector<double>> rows) {
    const std::size_t n = rows.size(), w = rows[0].size();
    Tensor p({n, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) p.at(i, j) = rows[i][j];
    return t.leaf(std::move(p));
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.word_dim = 16;
    cfg.entity_dim = 4;
    cfg.lstm_hidden = 12;
    cfg.hidden = 24;
    cfg.edge_dim = 6;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    cfg.lr = 0.3;
    cfg.batch = 25;
    cfg.max_epochs = 14;
    cfg.patience = 14;
    cfg.seed = 3;
    return cfg;
}

SyntheticCorpus small_corpus(bool label_blind = false, std::uint64_t seed = 29) {
    SyntheticSpec spec;
    spec.train = 200;
    spec.dev = 50;
    spec.test = 50;
    spec.event_types = 3;
    spec.label_blind = label_blind;
    return gen_synthetic(spec, seed);
}

double mean_loss(Model& model, const std::vector<Sentence>& corpus) {
    double total = 0.0;
    for (const Sentence& s : corpus) {
        EncodedSentence enc = encode_sentence(s, model.vocabs(), model.tags(), false);
        ad::Tape tape;
        Model::Forward f = model.forward(tape, enc, false);
        std::vector<std::uint8_t> mask(enc.size(), 1);
        total += bias_loss(f.probs, enc.gold, mask, model.config().alpha).value()[0];
    }
    return total / corpus.size();
}

}  // namespace

TEST_CASE("bias loss") {
    SUBCASE("gold O with certainty contributes nothing") {
        ad::Tape t;
        ad::Var probs = probs_leaf(t, {{1.0, 0.0, 0.0}});
        ad::Var loss = bias_loss(probs, {0}, {1}, 5.0);
        CHECK(loss.value()[0] == 0.0);
    }
    SUBCASE("event tag at p=e^-1 with alpha 5 contributes 5") {
        ad::Tape t;
        const double p = std::exp(-1.0);
        ad::Var probs = probs_leaf(t, {{1.0 - p, p, 0.0}});
        ad::Var loss = bias_loss(probs, {1}, {1}, 5.0);
        CHECK(loss.value()[0] == doctest::Approx(5.0));
    }
    SUBCASE("event term is exactly alpha times the O term") {
        const double q = 0.37;
        ad::Tape t1, t2;
        ad::Var lo = bias_loss(probs_leaf(t1, {{q, 1 - q, 0.0}}), {0}, {1}, 5.0);
        ad::Var le = bias_loss(probs_leaf(t2, {{1 - q, q, 0.0}}), {1}, {1}, 5.0);
        CHECK(le.value()[0] == doctest::Approx(5.0 * lo.value()[0]));
    }
    SUBCASE("non-negative, zero only when every token is certain") {
        ad::Tape t;
        ad::Var perfect = bias_loss(probs_leaf(t, {{1, 0, 0}, {0, 1, 0}}), {0, 1},
                                    {1, 1}, 5.0);
        CHECK(perfect.value()[0] == 0.0);
        ad::Var off = bias_loss(probs_leaf(t, {{0.9, 0.1, 0.0}}), {0}, {1}, 5.0);
        CHECK(off.value()[0] > 0.0);
    }
    SUBCASE("larger alpha strictly increases the loss on imperfect event tokens") {
        ad::Tape t1, t2;
        ad::Var a5 = bias_loss(probs_leaf(t1, {{0.3, 0.7, 0.0}}), {1}, {1}, 5.0);
        ad::Var a6 = bias_loss(probs_leaf(t2, {{0.3, 0.7, 0.0}}), {1}, {1}, 6.0);
        CHECK(a6.value()[0] > a5.value()[0]);
    }
    SUBCASE("alpha below one is rejected") {
        ad::Tape t;
        ad::Var probs = probs_leaf(t, {{1, 0, 0}});
        CHECK_THROWS_AS(bias_loss(probs, {0}, {1}, 0.5), ArgumentError);
    }
    SUBCASE("padded tokens contribute nothing, including gradients") {
        Rng rng(5);
        ad::Tape t;
        ad::Parameter h("h", oracles::random_tensor({3, 4}, rng));
        ad::Parameter w("w", oracles::random_tensor({4, 3}, rng));
        ad::Var probs = ad::softmax_rows(ad::matmul(t.param(h), t.param(w)));
        // row 2 is padding
        ad::Var loss = bias_loss(probs, {0, 1, 2}, {1, 1, 0}, 5.0);
        t.backward(loss);
        for (std::size_t c = 0; c < 4; ++c) CHECK(h.grad.at(2, c) == 0.0);
        bool any = false;
        for (std::size_t c = 0; c < 4; ++c) any = any || h.grad.at(0, c) != 0.0;
        CHECK(any);
    }
    SUBCASE("zero probability is clamped and counted") {
        ad::Tape t;
        ad::Var probs = probs_leaf(t, {{0.0, 1.0, 0.0}});
        ad::Var loss = bias_loss(probs, {0}, {1}, 5.0);
        CHECK(std::isfinite(loss.value()[0]));
        CHECK(loss.value()[0] == doctest::Approx(-std::log(1e-12)));
        CHECK(t.clamp_count() == 1);
        t.backward(loss);  // gradient on the clamped entry is zero
        CHECK(probs.grad()[0] == 0.0);
    }
}

TEST_CASE("training on the synthetic task") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));

    const double loss_before = mean_loss(model, corpus.train);
    TrainResult result = train_model(model, corpus.train, corpus.dev);
    const double loss_after = mean_loss(model, corpus.train);

    SUBCASE("loss drops and dev F1 is meaningful") {
        CHECK(result.history.size() >= 1);
        CHECK(result.history[0].train_loss < loss_before);
        CHECK(loss_after < loss_before);
        CHECK(result.best_dev_f1 > 0.8);
        CHECK(result.best_epoch >= 1);
    }
    SUBCASE("trained relation norms highlight the trigger column") {
        // mirror of the adjacency visualization: after training, the column of
        // the trigger token carries more mass than other columns
        double trig_sum = 0.0, other_sum = 0.0;
        std::size_t trig_n = 0, other_n = 0;
        for (const Sentence& s : corpus.test) {
            if (s.triggers.size() != 1) continue;
            EncodedSentence enc = encode_sentence(s, model.vocabs(), model.tags(), false);
            ad::Tape tape;
            Model::Forward f = model.forward(tape, enc, false);
            Tensor m = relevance_matrix(f.e_layers.back().value());
            const std::size_t n = enc.size();
            const int trig = s.triggers[0].start;
            for (std::size_t j = 0; j < n; ++j) {
                double col = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i != j) col += m.at(i, j);
                }
                col /= static_cast<double>(n - 1);
                if (static_cast<int>(j) == trig) {
                    trig_sum += col;
                    ++trig_n;
                } else {
                    other_sum += col;
                    ++other_n;
                }
            }
        }
        REQUIRE(trig_n > 10);
        CHECK(trig_sum / trig_n > other_sum / other_n);
    }
}

TEST_CASE("zero learning rate is a fixed point") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    cfg.lr = 0.0;
    cfg.l2 = 0.0;
    cfg.max_epochs = 2;
    cfg.patience = 10;
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
    std::vector<Tensor> before;
    for (ad::Parameter* p : model.parameters()) before.push_back(p->value);
    train_model(model, corpus.train, corpus.dev);
    std::vector<ad::Parameter*> params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(oracles::max_abs_diff(params[i]->value, before[i]) == 0.0);
    }
}

TEST_CASE("identical seeds give identical runs") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    cfg.max_epochs = 3;
    auto run = [&]() {
        Vocabs vocabs = build_vocabs(corpus.train);
        Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
        std::ostringstream metrics;
        TrainHooks hooks;
        hooks.metrics = &metrics;
        train_model(model, corpus.train, corpus.dev, hooks);
        return metrics.str();
    };
    // run twice through fresh models; the metrics byte streams must agree
    std::string a = run(), b = run();
    CHECK(a == b);
    CHECK(!a.empty());
}

TEST_CASE("non-finite loss aborts with the offending tensor named") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    cfg.max_epochs = 1;
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
    for (ad::Parameter* p : model.parameters()) {
        if (p->name == "cls.b") p->value[0] = std::numeric_limits<double>::infinity();
    }
    CHECK_THROWS_WITH_AS(train_model(model, corpus.train, corpus.dev),
                         doctest::Contains("non-finite"), StateError);
}

TEST_CASE("patience stops training") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    cfg.lr = 0.0;  // nothing improves after epoch 1
    cfg.max_epochs = 30;
    cfg.patience = 2;
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
    TrainResult result = train_model(model, corpus.train, corpus.dev);
    CHECK(result.history.size() == 3);  // epoch 1 sets the best, then patience 2
}

TEST_CASE("ablation switches") {
    SUBCASE("switch mapping") {
        ModelConfig base;
        CHECK_FALSE(apply_ablation_switch(base, "TDL").use_typed_labels);
        CHECK_FALSE(apply_ablation_switch(base, "NAEU").use_naeu);
        ModelConfig both = apply_ablation_switch(base, "TDL&NAEU");
        CHECK_FALSE(both.use_typed_labels);
        CHECK_FALSE(both.use_naeu);
        CHECK(apply_ablation_switch(base, "MDER").edge_dim == 1);
        CHECK_FALSE(apply_ablation_switch(base, "BiLSTM").use_bilstm);
        CHECK_THROWS_AS(apply_ablation_switch(base, "FOO"), ArgumentError);
    }
    SUBCASE("table shape") {
        SyntheticSpec spec;
        spec.train = 40;
        spec.dev = 15;
        spec.test = 0;
        spec.event_types = 2;
        SyntheticCorpus corpus = gen_synthetic(spec, 31);
        ModelConfig cfg = small_config();
        cfg.word_dim = 8;
        cfg.entity_dim = 2;
        cfg.lstm_hidden = 4;
        cfg.hidden = 8;
        cfg.edge_dim = 3;
        cfg.max_epochs = 1;
        cfg.allow_unk_label = true;  // tiny splits may miss rare labels
        SUBCASE("empty switch set gives the single baseline row") {
            auto rows = run_ablation(cfg, {}, corpus.train, corpus.dev,
                                     corpus.event_types, 2);
            REQUIRE(rows.size() == 1);
            CHECK(rows[0].name == "full");
            CHECK(rows[0].f1s.size() == 2);
        }
        SUBCASE("one row per variant, median over exactly five seeds") {
            auto rows = run_ablation(cfg, {"TDL", "NAEU", "TDL&NAEU", "MDER", "BiLSTM"},
                                     corpus.train, corpus.dev, corpus.event_types, 5);
            REQUIRE(rows.size() == 6);
            for (const auto& r : rows) {
                CHECK(r.f1s.size() == 5);
                std::vector<double> sorted = r.f1s;
                std::sort(sorted.begin(), sorted.end());
                CHECK(r.median_f1 == sorted[2]);
            }
        }
    }
}

TEST_CASE("sweep") {
    SUBCASE("axes") {
        CHECK(sweep_values("layers").size() == 10);
        auto dims = sweep_values("edge_dim");
        CHECK(std::count(dims.begin(), dims.end(), 1) == 1);
        CHECK(std::count(dims.begin(), dims.end(), 50) == 1);
        CHECK_THROWS_AS(sweep_values("bogus"), ArgumentError);
    }
    SUBCASE("layer sweep emits ten rows with seed counts") {
        SyntheticSpec spec;
        spec.train = 30;
        spec.dev = 10;
        spec.test = 0;
        spec.event_types = 2;
        SyntheticCorpus corpus = gen_synthetic(spec, 33);
        ModelConfig cfg = small_config();
        cfg.word_dim = 8;
        cfg.entity_dim = 2;
        cfg.lstm_hidden = 4;
        cfg.hidden = 6;
        cfg.edge_dim = 2;
        cfg.max_epochs = 1;
        cfg.allow_unk_label = true;
        auto rows = run_sweep(cfg, "layers", corpus.train, corpus.dev,
                              corpus.event_types, 1);
        REQUIRE(rows.size() == 10);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows[i].value == i + 1);
            CHECK(rows[i].seeds == 1);
        }
    }
}

TEST_CASE("checkpoints") {
    SyntheticCorpus corpus = small_corpus();
    ModelConfig cfg = small_config();
    cfg.max_epochs = 2;
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
    train_model(model, corpus.train, corpus.dev);

    const std::string path_a = "tmp_ckpt_a.json";
    const std::string path_b = "tmp_ckpt_b.json";
    save_checkpoint(path_a, model, cfg.seed);

    SUBCASE("bit-exact round trip") {
        LoadedCheckpoint loaded = load_checkpoint(path_a);
        CHECK(loaded.seed == cfg.seed);
        save_checkpoint(path_b, loaded.model, loaded.seed);
        std::ifstream fa(path_a), fb(path_b);
        std::stringstream sa, sb;
        sa << fa.rdbuf();
        sb << fb.rdbuf();
        CHECK(sa.str() == sb.str());
        // parameters compare bitwise
        auto pa = model.parameters();
        auto pb = loaded.model.parameters();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            REQUIRE(pa[i]->value.numel() == pb[i]->value.numel());
            for (std::size_t k = 0; k < pa[i]->value.numel(); ++k) {
                CHECK(pa[i]->value[k] == pb[i]->value[k]);
            }
        }
    }
    SUBCASE("loaded model predicts identically") {
        LoadedCheckpoint loaded = load_checkpoint(path_a);
        for (const Sentence& s : corpus.test) {
            EncodedSentence enc = encode_sentence(s, model.vocabs(), model.tags(), false);
            CHECK(model.predict_tags(enc) == loaded.model.predict_tags(enc));
        }
    }
    SUBCASE("corrupted parameter set is rejected") {
        std::ifstream in(path_a);
        nlohmann::json j;
        in >> j;
        j["params"][0]["name"] = "no_such_param";
        std::ofstream out(path_b);
        out << j.dump();
        out.close();
        CHECK_THROWS_AS(load_checkpoint(path_b), FormatError);
    }
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
}

TEST_CASE("config defaults and file io") {
    ModelConfig cfg;
    SUBCASE("defaults are the tuned values") {
        CHECK(cfg.word_dim == 100);
        CHECK(cfg.entity_dim == 25);
        CHECK(cfg.edge_dim == 50);
        CHECK(cfg.lstm_hidden == 100);
        CHECK(cfg.hidden == 150);
        CHECK(cfg.layers == 2);
        CHECK(cfg.dropout == 0.6);
        CHECK(cfg.alpha == 5.0);
        CHECK(cfg.lr == 0.1);
        CHECK(cfg.batch == 30);
        CHECK(cfg.l2 == 1e-5);
        CHECK(cfg.max_len == 50);
        CHECK(cfg.use_typed_labels);
        CHECK(cfg.use_naeu);
        CHECK(cfg.use_bilstm);
        CHECK_FALSE(cfg.naeu_masked);
        CHECK(cfg.classifier_input == ClassifierInput::Last);
        CHECK(cfg.baseline == BaselineKind::EEGCN);
        CHECK(cfg.clip_norm == 0.0);
    }
    SUBCASE("overriding alpha with its default changes nothing") {
        ModelConfig other;
        apply_override(other, "alpha=5");
        CHECK(config_to_map(other) == config_to_map(cfg));
    }
    SUBCASE("unknown keys abort") {
        CHECK_THROWS_WITH_AS(apply_override(cfg, "no_such_key=1"),
                             doctest::Contains("no_such_key"), ConfigError);
        CHECK_THROWS_AS(apply_override(cfg, "alphafive"), ConfigError);
        CHECK_THROWS_AS(apply_override(cfg, "alpha=banana"), ConfigError);
    }
    SUBCASE("file round trip covers every field") {
        cfg.baseline = BaselineKind::RGCN;
        cfg.classifier_input = ClassifierInput::ConcatLayers;
        cfg.synthetic.label_blind = true;
        cfg.train_path = "x/train.jsonl";
        cfg.seed = 99;
        const std::string path = "tmp_cfg_test.cfg";
        save_config(cfg, path);
        ModelConfig loaded = load_config(path);
        CHECK(config_to_map(loaded) == config_to_map(cfg));
        std::remove(path.c_str());
    }
}

TEST_CASE("json doubles round-trip exactly") {
    Rng rng(99);
    std::vector<double> values = {0.0, -0.0, 0.1, -1.0 / 3.0, 1e-308, 1e308,
                                  3.141592653589793, 5e-324};
    for (int i = 0; i < 200; ++i) {
        values.push_back(rng.uniform(-1e6, 1e6));
        values.push_back(rng.uniform(-1e-6, 1e-6));
    }
    nlohmann::json j = values;
    std::vector<double> back = nlohmann::json::parse(j.dump()).get<std::vector<double>>();
    REQUIRE(back.size() == values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        CHECK(std::memcmp(&back[i], &values[i], sizeof(double)) == 0);
    }
}
