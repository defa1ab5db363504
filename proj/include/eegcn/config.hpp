#ifndef EEGCN_CONFIG_HPP
#define EEGCN_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>

#include "eegcn/corpus.hpp"

namespace eegcn {

enum class ClassifierInput { Last, ConcatLayers };
enum class BaselineKind { EEGCN, GCN, RGCN };

std::string to_string(ClassifierInput v);
std::string to_string(BaselineKind v);

/// All model and training hyperparameters plus ablation switches. Defaults are
/// the tuned values the architecture ships with.
struct ModelConfig {
    std::size_t word_dim = 100;
    std::size_t entity_dim = 25;
    std::size_t edge_dim = 50;  // relation embedding dimension p
    std::size_t lstm_hidden = 100;
    std::size_t hidden = 150;  // node state dimension d
    std::size_t layers = 2;
    double dropout = 0.6;
    double alpha = 5.0;
    double lr = 0.1;
    std::size_t batch = 30;
    double l2 = 1e-5;
    std::size_t max_len = 50;

    // Ablation switches.
    bool use_typed_labels = true;
    bool use_naeu = true;
    bool use_bilstm = true;
    bool naeu_masked = false;
    ClassifierInput classifier_input = ClassifierInput::Last;
    BaselineKind baseline = BaselineKind::EEGCN;

    // Graph construction.
    bool add_all_self_loops = false;
    bool allow_unk_label = false;

    // Training loop.
    std::size_t max_epochs = 100;
    std::size_t patience = 15;
    double clip_norm = 0.0;     // 0 disables clipping
    double early_stop_f1 = 1.0; // stop once dev F1 reaches this
    std::uint64_t seed = 1;

    // Paths.
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string embeddings_path;
    std::string out_dir;

    SyntheticSpec synthetic;
};

ModelConfig load_config(const std::string& path);
void save_config(const ModelConfig& cfg, const std::string& path);

/// Apply a single "key=value" override. Unknown keys or unparsable values
/// throw ConfigError.
void apply_override(ModelConfig& cfg, const std::string& key_eq_value);

std::map<std::string, std::string> config_to_map(const ModelConfig& cfg);
ModelConfig config_from_map(const std::map<std::string, std::string>& entries);

}  // namespace eegcn

#endif  // EEGCN_CONFIG_HPP
