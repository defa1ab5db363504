#ifndef EEGCN_CHECKPOINT_HPP
#define EEGCN_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include "eegcn/model.hpp"

namespace eegcn {

/// Self-describing JSON container: config, vocabularies, run seed, and every
/// active named parameter as shape plus row-major values. Doubles are written
/// in round-trip form, so save/load/save is bit-exact.
void save_checkpoint(const std::string& path, Model& model, std::uint64_t run_seed);

struct LoadedCheckpoint {
    Model model;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace eegcn

#endif  // EEGCN_CHECKPOINT_HPP
