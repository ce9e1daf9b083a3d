#pragma once

#include <cstdint>
#include <string>

#include "dolfin/data.hpp"
#include "dolfin/model.hpp"
#include "dolfin/subspace.hpp"

namespace dolfin {

struct RoundConfig {
    int num_clients = 10;
    int local_epochs = 5;
    int rounds_per_task = 1;
    int batch_size = 16;
    double participation = 1.0;
};

struct AblationFlags {
    bool random_a = false;
    bool no_memory_update = false;
    bool weighted_a_avg = false;
};

struct ExperimentConfig {
    BackboneConfig backbone;
    MemoryConfig memory;
    RoundConfig round;

    std::string data_kind = "synthetic";  // synthetic | idx | csv
    SyntheticConfig data;
    std::string data_path;
    std::string labels_path;

    int num_tasks = 10;
    double beta = 0.5;
    double adapter_lr = 1e-3;
    double head_lr = 1e-2;
    double weight_decay = 0.0;
    int rank = 2;
    std::uint64_t seed = 1;
    int threads = 1;
    AblationFlags ablation;

    void validate() const;
};

// Flat key-value sections ("[section]\nkey = value"); '#' starts a comment.
// Unknown sections or keys are configuration errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical echo; parsing it back reproduces the config exactly.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace dolfin
