#include "eegcn/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "eegcn/errors.hpp"

namespace eegcn {

std::string to_string(ClassifierInput v) {
    return v == ClassifierInput::Last ? "last" : "concat_layers";
}

std::string to_string(BaselineKind v) {
    switch (v) {
        case BaselineKind::EEGCN: return "eegcn";
        case BaselineKind::GCN: return "gcn";
        default: return "rgcn";
    }
}

namespace {

struct Field {
    std::function<std::string(const ModelConfig&)> get;
    std::function<void(ModelConfig&, const std::string&)> set;
};

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        const long long x = std::stoll(v);
        if (x < 0) throw ConfigError("config key '" + key + "' must be non-negative");
        return static_cast<std::size_t>(x);
    } catch (const ConfigError&) {
        throw;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

#define SIZE_FIELD(name, member)                                                   \
    {name,                                                                         \
     {[](const ModelConfig& c) { return std::to_string(c.member); },               \
      [](ModelConfig& c, const std::string& v) { c.member = parse_size(name, v); }}}
#define DOUBLE_FIELD(name, member)                                                 \
    {name,                                                                         \
     {[](const ModelConfig& c) { return fmt_double(c.member); },                   \
      [](ModelConfig& c, const std::string& v) { c.member = parse_double(name, v); }}}
#define BOOL_FIELD(name, member)                                                   \
    {name,                                                                         \
     {[](const ModelConfig& c) { return c.member ? "true" : "false"; },            \
      [](ModelConfig& c, const std::string& v) { c.member = parse_bool(name, v); }}}
#define STRING_FIELD(name, member)                                                 \
    {name,                                                                         \
     {[](const ModelConfig& c) { return c.member; },                               \
      [](ModelConfig& c, const std::string& v) { c.member = v; }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        SIZE_FIELD("word_dim", word_dim),
        SIZE_FIELD("entity_dim", entity_dim),
        SIZE_FIELD("edge_dim", edge_dim),
        SIZE_FIELD("lstm_hidden", lstm_hidden),
        SIZE_FIELD("hidden", hidden),
        SIZE_FIELD("layers", layers),
        DOUBLE_FIELD("dropout", dropout),
        DOUBLE_FIELD("alpha", alpha),
        DOUBLE_FIELD("lr", lr),
        SIZE_FIELD("batch", batch),
        DOUBLE_FIELD("l2", l2),
        SIZE_FIELD("max_len", max_len),
        BOOL_FIELD("use_typed_labels", use_typed_labels),
        BOOL_FIELD("use_naeu", use_naeu),
        BOOL_FIELD("use_bilstm", use_bilstm),
        BOOL_FIELD("naeu_masked", naeu_masked),
        {"classifier_input",
         {[](const ModelConfig& c) { return to_string(c.classifier_input); },
          [](ModelConfig& c, const std::string& v) {
              if (v == "last") c.classifier_input = ClassifierInput::Last;
              else if (v == "concat_layers") c.classifier_input = ClassifierInput::ConcatLayers;
              else throw ConfigError("classifier_input must be last|concat_layers, got '" + v + "'");
          }}},
        {"baseline",
         {[](const ModelConfig& c) { return to_string(c.baseline); },
          [](ModelConfig& c, const std::string& v) {
              if (v == "eegcn") c.baseline = BaselineKind::EEGCN;
              else if (v == "gcn") c.baseline = BaselineKind::GCN;
              else if (v == "rgcn") c.baseline = BaselineKind::RGCN;
              else throw ConfigError("baseline must be eegcn|gcn|rgcn, got '" + v + "'");
          }}},
        BOOL_FIELD("add_all_self_loops", add_all_self_loops),
        BOOL_FIELD("allow_unk_label", allow_unk_label),
        SIZE_FIELD("max_epochs", max_epochs),
        SIZE_FIELD("patience", patience),
        DOUBLE_FIELD("clip_norm", clip_norm),
        DOUBLE_FIELD("early_stop_f1", early_stop_f1),
        {"seed",
         {[](const ModelConfig& c) { return std::to_string(c.seed); },
          [](ModelConfig& c, const std::string& v) {
              try {
                  c.seed = std::stoull(v);
              } catch (...) {
                  throw ConfigError("config key 'seed' expects an integer, got '" + v + "'");
              }
          }}},
        STRING_FIELD("train_path", train_path),
        STRING_FIELD("dev_path", dev_path),
        STRING_FIELD("test_path", test_path),
        STRING_FIELD("embeddings_path", embeddings_path),
        STRING_FIELD("out_dir", out_dir),
        SIZE_FIELD("syn_event_types", synthetic.event_types),
        SIZE_FIELD("syn_train", synthetic.train),
        SIZE_FIELD("syn_dev", synthetic.dev),
        SIZE_FIELD("syn_test", synthetic.test),
        SIZE_FIELD("syn_len_min", synthetic.len_min),
        SIZE_FIELD("syn_len_max", synthetic.len_max),
        SIZE_FIELD("syn_trigger_words", synthetic.trigger_words),
        SIZE_FIELD("syn_arg_words", synthetic.arg_words),
        SIZE_FIELD("syn_filler_words", synthetic.filler_words),
        BOOL_FIELD("syn_label_blind", synthetic.label_blind),
        DOUBLE_FIELD("syn_triggerless_rate", synthetic.triggerless_rate),
        DOUBLE_FIELD("syn_two_token_trigger_rate", synthetic.two_token_trigger_rate),
    };
    return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD

void set_field(ModelConfig& cfg, const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, value);
}

}  // namespace

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    ModelConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        std::size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        }
        auto trim = [](std::string s) {
            const std::size_t x = s.find_first_not_of(" \t");
            const std::size_t y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        set_field(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void save_config(const ModelConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file '" + path + "'");
    for (const auto& [key, field] : fields()) {
        out << key << " = " << field.get(cfg) << '\n';
    }
}

void apply_override(ModelConfig& cfg, const std::string& key_eq_value) {
    const std::size_t eq = key_eq_value.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must be key=value, got '" + key_eq_value + "'");
    }
    set_field(cfg, key_eq_value.substr(0, eq), key_eq_value.substr(eq + 1));
}

std::map<std::string, std::string> config_to_map(const ModelConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& [key, field] : fields()) out[key] = field.get(cfg);
    return out;
}

ModelConfig config_from_map(const std::map<std::string, std::string>& entries) {
    ModelConfig cfg;
    for (const auto& [key, value] : entries) set_field(cfg, key, value);
    return cfg;
}

}  // namespace eegcn
