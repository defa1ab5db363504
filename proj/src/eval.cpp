#include "eegcn/eval.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>

#include "eegcn/errors.hpp"
#include "eegcn/train.hpp"

namespace eegcn {

using nlohmann::json;

namespace {

json prf_to_json(const PRF& prf) {
    return json{{"gold", prf.gold},
                {"predicted", prf.predicted},
                {"correct", prf.correct},
                {"precision", prf.precision()},
                {"recall", prf.recall()},
                {"f1", prf.f1()}};
}

void check_spans(const std::vector<Trigger>& spans, const char* which) {
    std::vector<Trigger> sorted = spans;
    std::sort(sorted.begin(), sorted.end(),
              [](const Trigger& a, const Trigger& b) { return a.start < b.start; });
    int prev_end = 0;
    for (const Trigger& t : sorted) {
        if (t.end <= t.start) {
            throw ValidationError(std::string(which) + " span has non-positive length");
        }
        if (t.start < prev_end) {
            throw ValidationError(std::string(which) + " spans overlap");
        }
        prev_end = t.end;
    }
}

}  // namespace

json score_to_json(const ScoreReport& report) {
    return json{{"identification", prf_to_json(report.identification)},
                {"classification", prf_to_json(report.classification)}};
}

void merge_into(ScoreReport& total, const ScoreReport& part) {
    for (auto [dst, src] : {std::pair{&total.identification, &part.identification},
                            std::pair{&total.classification, &part.classification}}) {
        dst->gold += src->gold;
        dst->predicted += src->predicted;
        dst->correct += src->correct;
    }
}

ScoreReport score(const std::vector<std::vector<Trigger>>& gold,
                  const std::vector<std::vector<Trigger>>& predicted) {
    if (gold.size() != predicted.size()) {
        throw ArgumentError("score: gold and predicted sentence counts differ");
    }
    ScoreReport report;
    for (std::size_t s = 0; s < gold.size(); ++s) {
        check_spans(gold[s], "gold");
        check_spans(predicted[s], "predicted");
        std::set<std::pair<int, int>> gold_spans;
        std::set<std::tuple<int, int, std::string>> gold_typed;
        for (const Trigger& t : gold[s]) {
            gold_spans.insert({t.start, t.end});
            gold_typed.insert({t.start, t.end, t.type});
        }
        report.identification.gold += gold[s].size();
        report.classification.gold += gold[s].size();
        report.identification.predicted += predicted[s].size();
        report.classification.predicted += predicted[s].size();
        for (const Trigger& t : predicted[s]) {
            if (gold_spans.count({t.start, t.end})) ++report.identification.correct;
            if (gold_typed.count({t.start, t.end, t.type})) ++report.classification.correct;
        }
    }
    return report;
}

ScoreReport evaluate(Model& model, const std::vector<EncodedSentence>& corpus) {
    std::vector<std::vector<Trigger>> gold, predicted;
    gold.reserve(corpus.size());
    predicted.reserve(corpus.size());
    // Sentences share a tape in chunks so parameters are copied once per
    // chunk, not once per sentence.
    constexpr std::size_t kChunk = 32;
    for (std::size_t start = 0; start < corpus.size(); start += kChunk) {
        ad::Tape tape;
        const std::size_t end = std::min(corpus.size(), start + kChunk);
        for (std::size_t i = start; i < end; ++i) {
            const EncodedSentence& s = corpus[i];
            gold.push_back(s.triggers);
            Model::Forward f = model.forward(tape, s, /*training=*/false);
            const Tensor& probs = f.probs.value();
            std::vector<int> tags(s.size(), TagSet::kOutside);
            for (std::size_t r = 0; r < s.size(); ++r) {
                const double* row = probs.data() + r * probs.dim(1);
                std::size_t best = 0;
                for (std::size_t c = 1; c < probs.dim(1); ++c) {
                    if (row[c] > row[best]) best = c;
                }
                tags[r] = static_cast<int>(best);
            }
            predicted.push_back(decode_tags(tags, model.tags()));
        }
    }
    return score(gold, predicted);
}

long long count_relation_params(BaselineKind kind, long long relations,
                                long long edge_dim, long long hidden) {
    if (relations < 0 || edge_dim < 0 || hidden < 0) {
        throw ArgumentError("count_relation_params: arguments must be non-negative");
    }
    switch (kind) {
        case BaselineKind::EEGCN: return edge_dim * relations;
        case BaselineKind::RGCN: return relations * hidden * hidden;
        case BaselineKind::GCN: return 0;
    }
    return 0;
}

namespace {

// Scheduler noise only ever lengthens a repetition, so the fastest one is the
// most faithful estimate of the compute time.
double best_of(const std::vector<double>& xs) {
    return *std::min_element(xs.begin(), xs.end());
}

}  // namespace

std::vector<BenchRow> run_bench(const ModelConfig& base,
                                const std::vector<Sentence>& corpus,
                                const std::vector<std::string>& event_types,
                                const BenchConfig& bench) {
    using clock = std::chrono::steady_clock;
    if (corpus.empty()) throw ArgumentError("run_bench: empty corpus");

    Vocabs vocabs = build_vocabs(corpus);
    TagSet tags(event_types);
    std::vector<EncodedSentence> encoded;
    const std::size_t want = bench.batch_count * base.batch;
    for (std::size_t i = 0; i < want; ++i) {
        encoded.push_back(encode_sentence(corpus[i % corpus.size()], vocabs, tags,
                                          base.allow_unk_label));
    }
    // Identical batches for every model and phase.
    std::vector<Batch> batches = make_batches(encoded, base.batch, base.max_len, 0);

    std::vector<BenchRow> rows;
    for (BaselineKind kind : {BaselineKind::GCN, BaselineKind::RGCN, BaselineKind::EEGCN}) {
        ModelConfig cfg = base;
        cfg.baseline = kind;
        BenchRow row;
        row.model = to_string(kind);

        {
            Model model(cfg, vocabs, tags, derive_init_seed(cfg.seed));
            auto params = model.parameters();
            Rng rng(derive_train_seed(cfg.seed));
            auto train_step = [&] {
                for (const Batch& b : batches) {
                    ad::Tape tape(&rng);
                    std::vector<ad::Var> losses;
                    for (const EncodedSentence& s : b.sentences) {
                        auto f = model.forward(tape, s, true);
                        std::vector<std::uint8_t> mask(s.size(), 1);
                        losses.push_back(bias_loss(f.probs, s.gold, mask, cfg.alpha));
                    }
                    ad::Var loss = ad::scale(ad::add_n(losses), 1.0 / b.size());
                    tape.backward(loss);
                    ad::sgd_step(params, cfg.lr, cfg.l2);
                }
            };
            for (std::size_t w = 0; w < bench.warmup; ++w) train_step();
            std::vector<double> times;
            for (std::size_t r = 0; r < bench.repetitions; ++r) {
                const auto t0 = clock::now();
                train_step();
                times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            }
            row.train_batches_per_sec = batches.size() / best_of(times);
        }

        {
            Model model(cfg, vocabs, tags, derive_init_seed(cfg.seed));
            auto infer_step = [&] {
                for (const Batch& b : batches) {
                    // One tape per batch so parameters are staged once, as in
                    // evaluate().
                    ad::Tape tape;
                    for (const EncodedSentence& s : b.sentences) {
                        model.forward(tape, s, false);
                    }
                }
            };
            for (std::size_t w = 0; w < bench.warmup; ++w) infer_step();
            std::vector<double> times;
            for (std::size_t r = 0; r < bench.repetitions; ++r) {
                const auto t0 = clock::now();
                infer_step();
                times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            }
            row.infer_batches_per_sec = batches.size() / best_of(times);
        }
        rows.push_back(row);
    }
    return rows;
}

json bench_to_json(const std::vector<BenchRow>& rows) {
    json out = json::array();
    for (const BenchRow& r : rows) {
        out.push_back({{"model", r.model},
                       {"train_batches_per_sec", r.train_batches_per_sec},
                       {"inference_batches_per_sec", r.infer_batches_per_sec}});
    }
    return out;
}

std::string bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << "model     train Bat/s   inference Bat/s\n";
    for (const BenchRow& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-8s %12.2f %17.2f\n", r.model.c_str(),
                      r.train_batches_per_sec, r.infer_batches_per_sec);
        os << buf;
    }
    return os.str();
}

}  // namespace eegcn
