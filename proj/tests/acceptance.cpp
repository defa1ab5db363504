// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one pass/fail line each. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "eegcn/checkpoint.hpp"
#include "eegcn/corpus.hpp"
#include "eegcn/eval.hpp"
#include "eegcn/model.hpp"
#include "eegcn/train.hpp"
#include "oracles.hpp"

using namespace eegcn;
using oracles::random_tensor;

namespace {

int g_failures = 0;

void run_criterion(int number, const std::string& title,
                   const std::function<bool(std::string&)>& body) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    std::string detail;
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::printf("%s  criterion %d: %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", number,
                title.c_str(), secs, detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.word_dim = 5;
    cfg.entity_dim = 3;
    cfg.lstm_hidden = 4;
    cfg.hidden = 6;
    cfg.edge_dim = 3;
    cfg.layers = 2;
    cfg.dropout = 0.0;
    cfg.batch = 2;
    cfg.seed = 7;
    return cfg;
}

std::vector<Sentence> tiny_batch() {
    Sentence a;
    a.tokens = {"ana", "met", "bo", "friday"};
    a.entity_tags = {"B-PER", "O", "B-PER", "O"};
    a.dep_head = {2, 0, 2, 2};
    a.dep_label = {"nsubj", "root", "dobj", "nmod"};
    a.triggers = {{1, 2, "Meet"}};
    Sentence b;
    b.tokens = {"bo", "saw", "ana", "again"};
    b.entity_tags = {"B-PER", "O", "B-PER", "O"};
    b.dep_head = {2, 0, 2, 2};
    b.dep_label = {"nsubj", "root", "dobj", "advmod"};
    b.triggers = {{1, 2, "Meet"}};
    return {a, b};
}

bool criterion_gradients(std::string& detail) {
    const std::vector<Sentence> batch = tiny_batch();
    ModelConfig cfg = tiny_config();
    Vocabs vocabs = build_vocabs(batch);
    TagSet tags({"Meet"});  // T = 3 tags
    Model model(cfg, vocabs, tags, derive_init_seed(cfg.seed));
    std::vector<EncodedSentence> enc;
    for (const Sentence& s : batch) enc.push_back(encode_sentence(s, vocabs, tags, false));

    auto result = oracles::finite_diff_check(model.parameters(), [&](ad::Tape& t) {
        std::vector<ad::Var> losses;
        for (const EncodedSentence& s : enc) {
            Model::Forward f = model.forward(t, s, /*training=*/true);
            std::vector<std::uint8_t> mask(s.size(), 1);
            losses.push_back(bias_loss(f.probs, s.gold, mask, cfg.alpha));
        }
        return ad::scale(ad::add_n(losses), 0.5);
    });
    std::ostringstream os;
    os << result.checked << " parameter entries, max rel err " << result.max_err << " at "
       << result.worst;
    detail = os.str();
    return result.max_err < 1e-4;
}

bool criterion_oracles(std::string& detail) {
    Rng rng(271);
    double worst = 0.0;
    for (int it = 0; it < 100; ++it) {
        const std::size_t n = 2 + rng.below(5);
        const std::size_t d = 1 + rng.below(8);
        const std::size_t p = 1 + rng.below(6);
        Tensor e = random_tensor({n, n, p}, rng);
        Tensor h = random_tensor({n, d}, rng);
        Tensor w = random_tensor({d, d}, rng);
        ad::Tape t;
        Tensor got = ad::eanu(t.constant(e), t.constant(h), t.constant(w)).value();
        worst = std::max(worst, oracles::max_abs_diff(got, oracles::eanu_oracle(e, h, w)));
    }
    for (int it = 0; it < 100; ++it) {
        const std::size_t n = 2 + rng.below(5);
        const std::size_t d = 1 + rng.below(8);
        const std::size_t p = 1 + rng.below(6);
        Tensor e = random_tensor({n, n, p}, rng);
        Tensor h = random_tensor({n, d}, rng);
        Tensor wu = random_tensor({p + 2 * d, p}, rng);
        std::vector<std::uint8_t> mask(n * n);
        for (auto& m : mask) m = rng.bernoulli(0.6) ? 1 : 0;
        const std::vector<std::uint8_t>* mp = it % 2 ? &mask : nullptr;
        ad::Tape t;
        Tensor got = ad::naeu(t.constant(e), t.constant(h), t.constant(wu), mp).value();
        worst = std::max(worst,
                         oracles::max_abs_diff(got, oracles::naeu_oracle(e, h, wu, mp)));
    }
    std::ostringstream os;
    os << "100+100 instances, max abs deviation " << worst;
    detail = os.str();
    return worst < 1e-10;
}

bool criterion_gcn_reduction(std::string& detail) {
    SyntheticSpec spec;
    spec.train = 20;
    spec.dev = 0;
    spec.test = 0;
    spec.event_types = 2;
    SyntheticCorpus corpus = gen_synthetic(spec, 101);
    Vocabs vocabs = build_vocabs(corpus.train);
    TagSet tags(corpus.event_types);

    double worst = 0.0;
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        ModelConfig cfg = tiny_config();
        cfg.edge_dim = 1;
        cfg.use_typed_labels = false;
        cfg.use_naeu = false;
        cfg.seed = 100 + i;
        Model model(cfg, vocabs, tags, derive_init_seed(cfg.seed));
        ad::Parameter& table = model.edge_vocab().table();
        for (std::size_t k = 0; k < table.value.numel(); ++k) table.value[k] = 1.0;
        Tensor shared_w;
        for (ad::Parameter* p : model.parameters()) {
            if (p->name == "layer0.w") shared_w = p->value;
        }
        for (ad::Parameter* p : model.parameters()) {
            if (p->name == "layer1.w") p->value = shared_w;
        }
        EncodedSentence enc = encode_sentence(corpus.train[i], vocabs, tags, false);
        ad::Tape tape;
        Model::Forward f = model.forward(tape, enc, false);
        ad::Tape tape2;
        Tensor h0 = model.encode(tape2, enc, false).value();
        AdjacencyStructure structure =
            adjacency_structure(enc, model.edge_vocab(), AdjacencyOptions{});
        Tensor a({enc.size(), enc.size()});
        for (std::size_t q = 0; q < a.numel(); ++q) a[q] = structure.mask[q] ? 1.0 : 0.0;
        Tensor expect = gcn_forward(a, h0, shared_w, cfg.layers);
        worst = std::max(worst, oracles::max_abs_diff(f.h_layers.back().value(), expect));
    }
    std::ostringstream os;
    os << "20 inputs, max abs deviation " << worst;
    detail = os.str();
    return worst <= 1e-12;
}

bool criterion_param_counts(std::string& detail) {
    bool ok = count_relation_params(BaselineKind::EEGCN, 40, 50, 150) == 2000 &&
              count_relation_params(BaselineKind::RGCN, 40, 50, 150) == 900000;
    for (long long r = 0; r <= 60 && ok; r += 5) {
        for (long long p = 1; p <= 80 && ok; p *= 2) {
            for (long long h = 1; h <= 256 && ok; h *= 4) {
                ok = count_relation_params(BaselineKind::EEGCN, r, p, h) == p * r &&
                     count_relation_params(BaselineKind::RGCN, r, p, h) == r * h * h;
            }
        }
    }
    detail = "p*r = 2000 and r*h*h = 900000 at r=40, p=50, h=150";
    return ok;
}

bool criterion_efficiency(std::string& detail) {
    SyntheticSpec spec;
    spec.train = 150;
    spec.dev = 0;
    spec.test = 0;
    SyntheticCorpus corpus = gen_synthetic(spec, 202);
    ModelConfig cfg;  // tuned defaults
    cfg.seed = 5;
    BenchConfig bench;
    bench.repetitions = 7;
    bench.warmup = 2;
    bench.batch_count = 3;
    std::vector<BenchRow> rows = run_bench(cfg, corpus.train, corpus.event_types, bench);
    double gcn = 0, rgcn = 0, eegcn = 0;
    for (const BenchRow& r : rows) {
        if (r.model == "gcn") gcn = r.infer_batches_per_sec;
        if (r.model == "rgcn") rgcn = r.infer_batches_per_sec;
        if (r.model == "eegcn") eegcn = r.infer_batches_per_sec;
    }
    std::ostringstream os;
    os.precision(3);
    os << "inference Bat/s gcn=" << gcn << " rgcn=" << rgcn << " eegcn=" << eegcn
       << "; eegcn/rgcn=" << eegcn / rgcn << " eegcn/gcn=" << eegcn / gcn;
    detail = os.str();
    return eegcn >= 3.0 * rgcn && eegcn >= 0.5 * gcn;
}

bool criterion_synthetic_learning(std::string& detail) {
    // Standard variant: signal in labels and in trigger words.
    SyntheticSpec spec;  // defaults: 2000/300/300, 5 types
    SyntheticCorpus corpus = gen_synthetic(spec, 404);
    ModelConfig cfg;  // tuned defaults
    cfg.max_epochs = 50;
    cfg.seed = 11;
    Vocabs vocabs = build_vocabs(corpus.train);
    Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
    TrainResult result = train_model(model, corpus.train, corpus.dev);

    auto encode_split = [&](Model& m, const std::vector<Sentence>& split) {
        std::vector<EncodedSentence> enc;
        for (const Sentence& s : split) {
            enc.push_back(encode_sentence(s, m.vocabs(), m.tags(), false));
        }
        return enc;
    };
    const double train_f1 =
        evaluate(model, encode_split(model, corpus.train)).classification.f1();
    const double test_f1 =
        evaluate(model, encode_split(model, corpus.test)).classification.f1();

    // Label-blind variant: labels are the only type signal. Train the full
    // model and the typed-label-off ablation with identical budgets.
    SyntheticSpec blind_spec;
    blind_spec.label_blind = true;
    blind_spec.train = 800;
    blind_spec.dev = 150;
    blind_spec.test = 150;
    SyntheticCorpus blind = gen_synthetic(blind_spec, 505);
    ModelConfig blind_cfg;
    blind_cfg.max_epochs = 25;
    blind_cfg.patience = 8;
    blind_cfg.seed = 12;
    Vocabs blind_vocabs = build_vocabs(blind.train);
    TagSet blind_tags(blind.event_types);

    Model full(blind_cfg, blind_vocabs, blind_tags, derive_init_seed(blind_cfg.seed));
    train_model(full, blind.train, blind.dev);
    const double full_f1 =
        evaluate(full, encode_split(full, blind.test)).classification.f1();

    ModelConfig tdl_cfg = apply_ablation_switch(blind_cfg, "TDL");
    Model tdl(tdl_cfg, blind_vocabs, blind_tags, derive_init_seed(tdl_cfg.seed));
    train_model(tdl, blind.train, blind.dev);
    const double tdl_f1 = evaluate(tdl, encode_split(tdl, blind.test)).classification.f1();

    std::ostringstream os;
    os.precision(4);
    os << "standard: train F1 " << train_f1 << ", test F1 " << test_f1 << " (epochs "
       << result.history.size() << "); label-blind: full " << full_f1 << " vs -TDL "
       << tdl_f1;
    detail = os.str();
    return train_f1 >= 0.95 && test_f1 >= 0.90 && full_f1 - tdl_f1 >= 0.10;
}

bool criterion_determinism(std::string& detail) {
    SyntheticSpec spec;
    spec.train = 300;
    spec.dev = 60;
    spec.test = 0;
    SyntheticCorpus corpus = gen_synthetic(spec, 606);
    ModelConfig cfg;  // tuned defaults
    cfg.max_epochs = 4;
    cfg.patience = 10;
    cfg.seed = 21;

    auto run = [&](const std::string& ckpt_path, std::string& metrics_out) {
        Vocabs vocabs = build_vocabs(corpus.train);
        Model model(cfg, vocabs, TagSet(corpus.event_types), derive_init_seed(cfg.seed));
        std::ostringstream metrics;
        TrainHooks hooks;
        hooks.metrics = &metrics;
        train_model(model, corpus.train, corpus.dev, hooks);
        save_checkpoint(ckpt_path, model, cfg.seed);
        metrics_out = metrics.str();
    };
    std::string m1, m2;
    run("acc_det_a.json", m1);
    run("acc_det_b.json", m2);
    std::ifstream fa("acc_det_a.json"), fb("acc_det_b.json");
    std::stringstream ca, cb;
    ca << fa.rdbuf();
    cb << fb.rdbuf();
    const bool metrics_equal = !m1.empty() && m1 == m2;
    const bool ckpt_equal = ca.str().size() > 0 && ca.str() == cb.str();
    std::remove("acc_det_a.json");
    std::remove("acc_det_b.json");
    std::ostringstream os;
    os << "metrics " << (metrics_equal ? "identical" : "DIFFER") << " ("
       << m1.size() << " bytes), checkpoints " << (ckpt_equal ? "identical" : "DIFFER")
       << " (" << ca.str().size() << " bytes)";
    detail = os.str();
    return metrics_equal && ckpt_equal;
}

bool criterion_scorer(std::string& detail) {
    // The stated examples first.
    std::vector<Trigger> gold = {{1, 2, "Meet"}, {4, 6, "Attack"}};
    ScoreReport perfect = score({gold}, {gold});
    if (perfect.classification.f1() != 1.0) {
        detail = "perfect predictions did not score 1";
        return false;
    }
    ScoreReport empty = score({gold}, {{}});
    if (empty.classification.precision() != 0.0 || empty.classification.recall() != 0.0 ||
        empty.classification.f1() != 0.0) {
        detail = "empty predictions did not score 0";
        return false;
    }
    ScoreReport half = score({gold}, {{{1, 2, "Meet"}, {7, 8, "Attack"}}});
    if (std::abs(half.classification.f1() - 0.5) > 1e-12) {
        detail = "2 gold / 2 predicted / 1 correct did not score 0.5";
        return false;
    }
    // Then the randomized cross-check.
    Rng rng(808);
    const char* types[] = {"A", "B", "C", "D"};
    for (int it = 0; it < 50; ++it) {
        const std::size_t sentences = 1 + rng.below(6);
        std::vector<std::vector<Trigger>> g(sentences), p(sentences);
        for (auto* side : {&g, &p}) {
            for (auto& spans : *side) {
                std::size_t pos = rng.below(3);
                const std::size_t n = 3 + rng.below(14);
                while (pos + 1 < n) {
                    if (rng.bernoulli(0.45)) {
                        const std::size_t len = 1 + rng.below(3);
                        spans.push_back({static_cast<int>(pos),
                                         static_cast<int>(pos + len),
                                         types[rng.below(4)]});
                        pos += len + 1;
                    } else {
                        ++pos;
                    }
                }
            }
        }
        ScoreReport r = score(g, p);
        oracles::OracleCounts oc = oracles::score_oracle(g, p);
        if (r.classification.gold != oc.gold || r.classification.predicted != oc.predicted ||
            r.classification.correct != oc.cls_correct ||
            r.identification.correct != oc.id_correct) {
            detail = "randomized case " + std::to_string(it) + " disagrees with the oracle";
            return false;
        }
    }
    detail = "3 stated examples plus 50 randomized cases";
    return true;
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    run_criterion(1, "end-to-end gradients at rel err < 1e-4", criterion_gradients);
    run_criterion(2, "eanu/naeu match brute-force oracles within 1e-10", criterion_oracles);
    run_criterion(3, "unit-edge reduction reproduces the vanilla gcn", criterion_gcn_reduction);
    run_criterion(4, "relation parameter-count formulas", criterion_param_counts);
    run_criterion(5, "inference throughput direction (eegcn vs rgcn/gcn)", criterion_efficiency);
    run_criterion(6, "synthetic-corpus learning and typed-label ablation gap",
                  criterion_synthetic_learning);
    run_criterion(7, "byte-identical reruns (metrics and checkpoint)", criterion_determinism);
    run_criterion(8, "scorer examples and randomized oracle cross-check", criterion_scorer);
    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
    } else {
        std::printf("all 8 criteria passed\n");
    }
    return g_failures;
}
