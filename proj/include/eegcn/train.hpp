#ifndef EEGCN_TRAIN_HPP
#define EEGCN_TRAIN_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "eegcn/autodiff.hpp"
#include "eegcn/eval.hpp"
#include "eegcn/model.hpp"

namespace eegcn {

/// Class-weighted negative log-likelihood: O tokens weigh 1, event tokens
/// weigh alpha, masked-out tokens contribute nothing. alpha must be >= 1.
ad::Var bias_loss(ad::Var probs, const std::vector<int>& gold,
                  const std::vector<std::uint8_t>& mask, double alpha);

/// Sub-seeds for the two random streams of a run, derived from the run seed.
std::uint64_t derive_init_seed(std::uint64_t run_seed);
std::uint64_t derive_train_seed(std::uint64_t run_seed);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    ScoreReport dev;
    double best_f1 = 0.0;
    std::size_t best_epoch = 0;
    std::size_t clamp_events = 0;
};

struct TrainResult {
    std::size_t best_epoch = 0;
    double best_dev_f1 = 0.0;
    std::vector<EpochRecord> history;
    std::size_t clamp_events = 0;
};

struct TrainHooks {
    std::ostream* metrics = nullptr;  // one JSON object per epoch
    std::ostream* console = nullptr;
};

/// SGD training with dev-set model selection. The model is left holding the
/// parameters of its best dev-F1 epoch.
TrainResult train_model(Model& model, const std::vector<Sentence>& train_set,
                        const std::vector<Sentence>& dev_set,
                        const TrainHooks& hooks = {});

struct VariantResult {
    std::string name;
    std::vector<double> f1s;  // per-seed best dev F1
    double median_f1 = 0.0;
};

/// Retrains the model with components switched off one at a time. Valid
/// switches: TDL, NAEU, TDL&NAEU, MDER, BiLSTM. The first row is the
/// unmodified configuration.
std::vector<VariantResult> run_ablation(const ModelConfig& base,
                                        const std::vector<std::string>& switches,
                                        const std::vector<Sentence>& train_set,
                                        const std::vector<Sentence>& dev_set,
                                        const std::vector<std::string>& event_types,
                                        std::size_t seeds,
                                        std::ostream* console = nullptr);

ModelConfig apply_ablation_switch(ModelConfig cfg, const std::string& name);

struct SweepRow {
    std::size_t value = 0;
    std::size_t seeds = 0;
    double median_f1 = 0.0;
};

/// Axis "edge_dim" sweeps {1,20,40,50,60,80}; axis "layers" sweeps 1..10.
std::vector<SweepRow> run_sweep(const ModelConfig& base, const std::string& axis,
                                const std::vector<Sentence>& train_set,
                                const std::vector<Sentence>& dev_set,
                                const std::vector<std::string>& event_types,
                                std::size_t seeds, std::ostream* console = nullptr);

std::vector<std::size_t> sweep_values(const std::string& axis);

}  // namespace eegcn

#endif  // EEGCN_TRAIN_HPP
