#ifndef EEGCN_EVAL_HPP
#define EEGCN_EVAL_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "eegcn/config.hpp"
#include "eegcn/corpus.hpp"
#include "eegcn/model.hpp"

namespace eegcn {

struct PRF {
    std::size_t gold = 0;
    std::size_t predicted = 0;
    std::size_t correct = 0;

    double precision() const { return predicted ? double(correct) / predicted : 0.0; }
    double recall() const { return gold ? double(correct) / gold : 0.0; }
    double f1() const {
        const double p = precision(), r = recall();
        return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
};

/// Trigger-level counts at two granularities: identification matches on the
/// span alone, classification on span plus event type.
struct ScoreReport {
    PRF identification;
    PRF classification;
};

nlohmann::json score_to_json(const ScoreReport& report);

/// Exact span matching; every gold trigger matches at most one prediction.
ScoreReport score(const std::vector<std::vector<Trigger>>& gold,
                  const std::vector<std::vector<Trigger>>& predicted);

void merge_into(ScoreReport& total, const ScoreReport& part);

/// Inference over a corpus followed by scoring against the gold spans.
ScoreReport evaluate(Model& model, const std::vector<EncodedSentence>& corpus);

/// Relation-related parameter counts: the edge-embedding scheme needs p per
/// relation, the per-relation-filter scheme h*h per relation.
long long count_relation_params(BaselineKind kind, long long relations,
                                long long edge_dim, long long hidden);

struct BenchConfig {
    std::size_t repetitions = 10;
    std::size_t warmup = 3;
    std::size_t batch_count = 4;  // batches measured per repetition
};

struct BenchRow {
    std::string model;
    double train_batches_per_sec = 0.0;
    double infer_batches_per_sec = 0.0;
};

/// Throughput of the three architectures on identical batches, warmup
/// excluded, reported as batches/second per phase.
std::vector<BenchRow> run_bench(const ModelConfig& base,
                                const std::vector<Sentence>& corpus,
                                const std::vector<std::string>& event_types,
                                const BenchConfig& bench);

nlohmann::json bench_to_json(const std::vector<BenchRow>& rows);
std::string bench_table(const std::vector<BenchRow>& rows);

}  // namespace eegcn

#endif  // EEGCN_EVAL_HPP
