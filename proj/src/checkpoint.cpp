#include "eegcn/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "eegcn/errors.hpp"
#include "eegcn/train.hpp"

namespace eegcn {

using nlohmann::json;

void save_checkpoint(const std::string& path, Model& model, std::uint64_t run_seed) {
    json j;
    j["format"] = "eegcn-checkpoint";
    j["version"] = 1;
    j["seed"] = run_seed;
    j["config"] = config_to_map(model.config());
    j["event_types"] = model.tags().event_types();
    j["vocab"] = {{"words", model.vocabs().words.items()},
                  {"entities", model.vocabs().entities.items()},
                  {"labels", model.vocabs().labels.items()}};
    json params = json::array();
    for (const ad::Parameter* p : model.parameters()) {
        params.push_back({{"name", p->name},
                          {"shape", p->value.shape()},
                          {"data", p->value.values()}});
    }
    j["params"] = std::move(params);

    std::ofstream out(path);
    if (!out) throw ArgumentError("cannot write checkpoint '" + path + "'");
    out << j.dump() << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != "eegcn-checkpoint" || j.value("version", 0) != 1) {
        throw FormatError("unrecognized checkpoint format");
    }

    std::map<std::string, std::string> cfg_map;
    for (const auto& [k, v] : j.at("config").items()) {
        cfg_map[k] = v.get<std::string>();
    }
    ModelConfig cfg = config_from_map(cfg_map);

    Vocabs vocabs;
    vocabs.words = Vocab::from_items(j.at("vocab").at("words").get<std::vector<std::string>>());
    vocabs.entities =
        Vocab::from_items(j.at("vocab").at("entities").get<std::vector<std::string>>());
    vocabs.labels =
        Vocab::from_items(j.at("vocab").at("labels").get<std::vector<std::string>>());
    TagSet tags(j.at("event_types").get<std::vector<std::string>>());
    const std::uint64_t seed = j.at("seed").get<std::uint64_t>();

    Model model(cfg, std::move(vocabs), std::move(tags), derive_init_seed(seed));

    std::map<std::string, ad::Parameter*> by_name;
    for (ad::Parameter* p : model.parameters()) by_name[p->name] = p;
    std::size_t filled = 0;
    for (const json& entry : j.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError("checkpoint parameter '" + name +
                              "' does not exist in this configuration");
        }
        const Shape shape = entry.at("shape").get<Shape>();
        if (shape != it->second->value.shape()) {
            throw FormatError("checkpoint parameter '" + name + "' has shape " +
                              shape_string(shape) + ", expected " +
                              it->second->value.shape_str());
        }
        it->second->value = Tensor(shape, entry.at("data").get<std::vector<double>>());
        ++filled;
    }
    if (filled != by_name.size()) {
        throw FormatError("checkpoint covers " + std::to_string(filled) + " of " +
                          std::to_string(by_name.size()) + " model parameters");
    }
    return LoadedCheckpoint{std::move(model), seed};
}

}  // namespace eegcn
