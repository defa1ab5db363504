#include "eegcn/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "eegcn/errors.hpp"

namespace eegcn {

using nlohmann::json;

ad::Var bias_loss(ad::Var probs, const std::vector<int>& gold,
                  const std::vector<std::uint8_t>& mask, double alpha) {
    if (alpha < 1.0) throw ArgumentError("bias_loss: alpha must be >= 1");
    const std::size_t n = probs.shape().at(0);
    if (gold.size() != n || mask.size() != n) {
        throw DimensionError("bias_loss: gold/mask length does not match " +
                             std::to_string(n) + " rows");
    }
    std::vector<double> weights(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        weights[i] = gold[i] == TagSet::kOutside ? 1.0 : alpha;
    }
    return ad::nll_rows(probs, gold, weights, 1e-12);
}

std::uint64_t derive_init_seed(std::uint64_t run_seed) {
    return Rng::splitmix(run_seed ^ 0x1157a7e0011ULL);
}

std::uint64_t derive_train_seed(std::uint64_t run_seed) {
    return Rng::splitmix(run_seed ^ 0x7ea1b0b5ULL);
}

namespace {

json epoch_json(const EpochRecord& rec) {
    return json{{"epoch", rec.epoch},
                {"train_loss", rec.train_loss},
                {"dev", score_to_json(rec.dev)},
                {"best_f1", rec.best_f1},
                {"best_epoch", rec.best_epoch},
                {"clamp_events", rec.clamp_events}};
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Sentence>& train_set,
                        const std::vector<Sentence>& dev_set, const TrainHooks& hooks) {
    const ModelConfig& cfg = model.config();
    if (train_set.empty()) throw ArgumentError("train_model: empty training set");
    if (dev_set.empty()) throw ArgumentError("train_model: empty dev set");

    std::vector<EncodedSentence> train_enc, dev_enc;
    train_enc.reserve(train_set.size());
    for (const Sentence& s : train_set) {
        train_enc.push_back(
            encode_sentence(s, model.vocabs(), model.tags(), cfg.allow_unk_label));
    }
    dev_enc.reserve(dev_set.size());
    for (const Sentence& s : dev_set) {
        dev_enc.push_back(
            encode_sentence(s, model.vocabs(), model.tags(), cfg.allow_unk_label));
    }

    Rng rng(derive_train_seed(cfg.seed));
    std::vector<ad::Parameter*> params = model.parameters();

    TrainResult result;
    double best_f1 = -1.0;
    std::vector<Tensor> best_snapshot;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<Batch> batches =
            make_batches(train_enc, cfg.batch, cfg.max_len, rng.fork());
        double loss_sum = 0.0;
        std::size_t clamp_events = 0;
        for (const Batch& batch : batches) {
            ad::Tape tape(&rng);
            std::vector<ad::Var> losses;
            losses.reserve(batch.size());
            std::size_t batch_tokens = 0;
            for (const EncodedSentence& s : batch.sentences) {
                Model::Forward f = model.forward(tape, s, /*training=*/true);
                std::vector<std::uint8_t> mask(s.size(), 1);
                losses.push_back(bias_loss(f.probs, s.gold, mask, cfg.alpha));
                batch_tokens += s.size();
            }
            // Per-token normalization keeps the step size independent of the
            // batch geometry.
            ad::Var batch_loss =
                ad::scale(ad::add_n(losses), 1.0 / static_cast<double>(batch_tokens));
            const double loss_value = batch_loss.value()[0];
            if (!std::isfinite(loss_value)) {
                const char* label = tape.first_nonfinite_label();
                throw StateError(std::string("training aborted: non-finite loss; first "
                                             "non-finite tensor: ") +
                                 (label ? label : "<unknown>"));
            }
            loss_sum += loss_value * static_cast<double>(batch_tokens);
            tape.backward(batch_loss);
            clamp_events += tape.clamp_count();
            ad::clip_gradients(params, cfg.clip_norm);
            ad::sgd_step(params, cfg.lr, cfg.l2);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_enc.size());
        rec.dev = evaluate(model, dev_enc);
        rec.clamp_events = clamp_events;
        result.clamp_events += clamp_events;

        const double f1 = rec.dev.classification.f1();
        if (f1 > best_f1) {
            best_f1 = f1;
            result.best_epoch = epoch;
            best_snapshot.clear();
            for (const ad::Parameter* p : params) best_snapshot.push_back(p->value);
        }
        result.best_dev_f1 = best_f1;
        rec.best_f1 = best_f1;
        rec.best_epoch = result.best_epoch;
        result.history.push_back(rec);

        if (hooks.metrics) *hooks.metrics << epoch_json(rec).dump() << '\n';
        if (hooks.console) {
            char line[160];
            std::snprintf(line, sizeof(line),
                          "epoch %3zu  loss %.6f  dev P %.4f R %.4f F1 %.4f  (best %.4f @%zu)",
                          epoch, rec.train_loss, rec.dev.classification.precision(),
                          rec.dev.classification.recall(), f1, best_f1, result.best_epoch);
            *hooks.console << line << std::endl;
        }

        if (best_f1 >= cfg.early_stop_f1) break;
        if (epoch - result.best_epoch >= cfg.patience) break;
    }

    if (!best_snapshot.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i]->value = best_snapshot[i];
            params[i]->zero_grad();
        }
    }
    return result;
}

ModelConfig apply_ablation_switch(ModelConfig cfg, const std::string& name) {
    if (name == "TDL") {
        cfg.use_typed_labels = false;
    } else if (name == "NAEU") {
        cfg.use_naeu = false;
    } else if (name == "TDL&NAEU") {
        cfg.use_typed_labels = false;
        cfg.use_naeu = false;
    } else if (name == "MDER") {
        cfg.edge_dim = 1;
    } else if (name == "BiLSTM") {
        cfg.use_bilstm = false;
    } else {
        throw ArgumentError("unknown ablation switch '" + name +
                            "' (expected TDL, NAEU, TDL&NAEU, MDER or BiLSTM)");
    }
    return cfg;
}

namespace {

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

VariantResult run_variant(const std::string& name, const ModelConfig& cfg,
                          const std::vector<Sentence>& train_set,
                          const std::vector<Sentence>& dev_set,
                          const std::vector<std::string>& event_types,
                          std::size_t seeds, std::ostream* console) {
    if (seeds == 0) throw ArgumentError("seed count must be positive");
    Vocabs vocabs = build_vocabs(train_set);
    VariantResult out;
    out.name = name;
    for (std::size_t k = 0; k < seeds; ++k) {
        ModelConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + k;
        Model model(run_cfg, vocabs, TagSet(event_types), derive_init_seed(run_cfg.seed));
        TrainResult r = train_model(model, train_set, dev_set);
        out.f1s.push_back(r.best_dev_f1);
        if (console) {
            *console << name << " seed " << run_cfg.seed << ": dev F1 " << r.best_dev_f1
                     << std::endl;
        }
    }
    out.median_f1 = median_of(out.f1s);
    return out;
}

}  // namespace

std::vector<VariantResult> run_ablation(const ModelConfig& base,
                                        const std::vector<std::string>& switches,
                                        const std::vector<Sentence>& train_set,
                                        const std::vector<Sentence>& dev_set,
                                        const std::vector<std::string>& event_types,
                                        std::size_t seeds, std::ostream* console) {
    std::vector<VariantResult> rows;
    rows.push_back(run_variant("full", base, train_set, dev_set, event_types, seeds,
                               console));
    for (const std::string& name : switches) {
        ModelConfig cfg = apply_ablation_switch(base, name);
        rows.push_back(run_variant("-" + name, cfg, train_set, dev_set, event_types,
                                   seeds, console));
    }
    return rows;
}

std::vector<std::size_t> sweep_values(const std::string& axis) {
    if (axis == "edge_dim") return {1, 20, 40, 50, 60, 80};
    if (axis == "layers") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    throw ArgumentError("unknown sweep axis '" + axis + "' (expected edge_dim or layers)");
}

std::vector<SweepRow> run_sweep(const ModelConfig& base, const std::string& axis,
                                const std::vector<Sentence>& train_set,
                                const std::vector<Sentence>& dev_set,
                                const std::vector<std::string>& event_types,
                                std::size_t seeds, std::ostream* console) {
    std::vector<SweepRow> rows;
    for (std::size_t value : sweep_values(axis)) {
        ModelConfig cfg = base;
        if (axis == "edge_dim") cfg.edge_dim = value;
        else cfg.layers = value;
        VariantResult r = run_variant(axis + "=" + std::to_string(value), cfg, train_set,
                                      dev_set, event_types, seeds, console);
        rows.push_back({value, seeds, r.median_f1});
    }
    return rows;
}

}  // namespace eegcn
