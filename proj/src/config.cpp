#include "dolfin/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dolfin {

void ExperimentConfig::validate() const {
    backbone.validate();
    if (memory.energy_threshold <= 0.0 || memory.energy_threshold >= 1.0) {
        throw ConfigError("config: memory.energy_threshold must lie in (0, 1)");
    }
    if (memory.activation_cap < 1) throw ConfigError("config: memory.activation_cap must be >= 1");
    if (round.num_clients < 1) throw ConfigError("config: round.num_clients must be >= 1");
    if (round.local_epochs < 1) throw ConfigError("config: round.local_epochs must be >= 1");
    if (round.rounds_per_task < 1) throw ConfigError("config: round.rounds_per_task must be >= 1");
    if (round.batch_size < 1) throw ConfigError("config: round.batch_size must be >= 1");
    if (round.participation <= 0.0 || round.participation > 1.0) {
        throw ConfigError("config: round.participation must lie in (0, 1]");
    }
    if (num_tasks < 1) throw ConfigError("config: num_tasks must be >= 1");
    if (beta <= 0.0) throw ConfigError("config: beta must be > 0");
    if (rank < 1) throw ConfigError("config: rank must be >= 1");
    if (rank > backbone.embed_dim) throw ConfigError("config: rank exceeds embed_dim");
    if (adapter_lr <= 0.0 || head_lr <= 0.0) throw ConfigError("config: learning rates must be > 0");
    if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
    if (threads < 1) throw ConfigError("config: threads must be >= 1");
    if (data_kind != "synthetic" && data_kind != "idx" && data_kind != "csv") {
        throw ConfigError("config: data_kind must be synthetic, idx, or csv");
    }
    if (data_kind != "synthetic" && data_path.empty()) {
        throw ConfigError("config: data_path required for ingested data");
    }
}

namespace {

using SectionMap = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

SectionMap parse_sections(const std::string& text) {
    SectionMap out;
    std::stringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config: malformed section at line " + std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            out[section];
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: expected key = value at line " + std::to_string(line_no));
        }
        out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

struct SectionReader {
    const std::string& name;
    std::map<std::string, std::string> kv;

    std::string take(const std::string& key, const std::string& fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        std::string v = it->second;
        kv.erase(it);
        return v;
    }
    int take_int(const std::string& key, int fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        int v;
        try {
            v = std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config: " + name + "." + key + " is not an integer");
        }
        kv.erase(it);
        return v;
    }
    double take_double(const std::string& key, double fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        double v;
        try {
            v = std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config: " + name + "." + key + " is not a number");
        }
        kv.erase(it);
        return v;
    }
    std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        std::uint64_t v;
        try {
            v = std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config: " + name + "." + key + " is not an unsigned integer");
        }
        kv.erase(it);
        return v;
    }
    bool take_bool(const std::string& key, bool fallback) {
        auto it = kv.find(key);
        if (it == kv.end()) return fallback;
        std::string v = it->second;
        kv.erase(it);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config: " + name + "." + key + " must be true or false");
    }
    void finish() const {
        if (!kv.empty()) {
            throw ConfigError("config: unknown key '" + kv.begin()->first + "' in section [" +
                              name + "]");
        }
    }
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    SectionMap sections = parse_sections(text);
    ExperimentConfig cfg;
    static const char* known[] = {"experiment", "backbone", "memory", "round", "data", "ablation"};
    for (const auto& [name, _] : sections) {
        bool ok = false;
        for (const char* k : known) ok = ok || (name == k);
        if (!ok) throw ConfigError("config: unknown section [" + name + "]");
    }
    {
        SectionReader r{"experiment", sections["experiment"]};
        cfg.num_tasks = r.take_int("num_tasks", cfg.num_tasks);
        cfg.beta = r.take_double("beta", cfg.beta);
        cfg.adapter_lr = r.take_double("adapter_lr", cfg.adapter_lr);
        cfg.head_lr = r.take_double("head_lr", cfg.head_lr);
        cfg.weight_decay = r.take_double("weight_decay", cfg.weight_decay);
        cfg.rank = r.take_int("rank", cfg.rank);
        cfg.seed = r.take_u64("seed", cfg.seed);
        cfg.threads = r.take_int("threads", cfg.threads);
        r.finish();
    }
    {
        SectionReader r{"backbone", sections["backbone"]};
        cfg.backbone.embed_dim = r.take_int("embed_dim", cfg.backbone.embed_dim);
        cfg.backbone.num_layers = r.take_int("num_layers", cfg.backbone.num_layers);
        cfg.backbone.num_tokens = r.take_int("num_tokens", cfg.backbone.num_tokens);
        cfg.backbone.input_dim = r.take_int("input_dim", cfg.backbone.input_dim);
        cfg.backbone.mlp_hidden = r.take_int("mlp_hidden", cfg.backbone.mlp_hidden);
        r.finish();
    }
    {
        SectionReader r{"memory", sections["memory"]};
        cfg.memory.energy_threshold = r.take_double("energy_threshold", cfg.memory.energy_threshold);
        cfg.memory.activation_cap = r.take_int("activation_cap", cfg.memory.activation_cap);
        r.finish();
    }
    {
        SectionReader r{"round", sections["round"]};
        cfg.round.num_clients = r.take_int("num_clients", cfg.round.num_clients);
        cfg.round.local_epochs = r.take_int("local_epochs", cfg.round.local_epochs);
        cfg.round.rounds_per_task = r.take_int("rounds_per_task", cfg.round.rounds_per_task);
        cfg.round.batch_size = r.take_int("batch_size", cfg.round.batch_size);
        cfg.round.participation = r.take_double("participation", cfg.round.participation);
        r.finish();
    }
    {
        SectionReader r{"data", sections["data"]};
        cfg.data_kind = r.take("kind", cfg.data_kind);
        cfg.data_path = r.take("path", cfg.data_path);
        cfg.labels_path = r.take("labels_path", cfg.labels_path);
        cfg.data.num_classes = r.take_int("num_classes", cfg.data.num_classes);
        cfg.data.samples_per_class = r.take_int("samples_per_class", cfg.data.samples_per_class);
        cfg.data.input_dim = r.take_int("input_dim", cfg.data.input_dim);
        cfg.data.cluster_spread = r.take_double("cluster_spread", cfg.data.cluster_spread);
        cfg.data.cluster_separation =
            r.take_double("cluster_separation", cfg.data.cluster_separation);
        cfg.data.seed = r.take_u64("seed", cfg.data.seed);
        r.finish();
    }
    {
        SectionReader r{"ablation", sections["ablation"]};
        cfg.ablation.random_a = r.take_bool("random_a", cfg.ablation.random_a);
        cfg.ablation.no_memory_update = r.take_bool("no_memory_update", cfg.ablation.no_memory_update);
        cfg.ablation.weighted_a_avg = r.take_bool("weighted_a_avg", cfg.ablation.weighted_a_avg);
        r.finish();
    }
    if (cfg.data_kind == "synthetic") {
        cfg.backbone.input_dim = cfg.data.input_dim;
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    out += "[experiment]\n";
    out += "num_tasks = " + std::to_string(cfg.num_tasks) + "\n";
    out += "beta = " + fmt_double(cfg.beta) + "\n";
    out += "adapter_lr = " + fmt_double(cfg.adapter_lr) + "\n";
    out += "head_lr = " + fmt_double(cfg.head_lr) + "\n";
    out += "weight_decay = " + fmt_double(cfg.weight_decay) + "\n";
    out += "rank = " + std::to_string(cfg.rank) + "\n";
    out += "seed = " + std::to_string(cfg.seed) + "\n";
    out += "threads = " + std::to_string(cfg.threads) + "\n";
    out += "[backbone]\n";
    out += "embed_dim = " + std::to_string(cfg.backbone.embed_dim) + "\n";
    out += "num_layers = " + std::to_string(cfg.backbone.num_layers) + "\n";
    out += "num_tokens = " + std::to_string(cfg.backbone.num_tokens) + "\n";
    out += "input_dim = " + std::to_string(cfg.backbone.input_dim) + "\n";
    out += "mlp_hidden = " + std::to_string(cfg.backbone.mlp_hidden) + "\n";
    out += "[memory]\n";
    out += "energy_threshold = " + fmt_double(cfg.memory.energy_threshold) + "\n";
    out += "activation_cap = " + std::to_string(cfg.memory.activation_cap) + "\n";
    out += "[round]\n";
    out += "num_clients = " + std::to_string(cfg.round.num_clients) + "\n";
    out += "local_epochs = " + std::to_string(cfg.round.local_epochs) + "\n";
    out += "rounds_per_task = " + std::to_string(cfg.round.rounds_per_task) + "\n";
    out += "batch_size = " + std::to_string(cfg.round.batch_size) + "\n";
    out += "participation = " + fmt_double(cfg.round.participation) + "\n";
    out += "[data]\n";
    out += "kind = " + cfg.data_kind + "\n";
    if (!cfg.data_path.empty()) out += "path = " + cfg.data_path + "\n";
    if (!cfg.labels_path.empty()) out += "labels_path = " + cfg.labels_path + "\n";
    out += "num_classes = " + std::to_string(cfg.data.num_classes) + "\n";
    out += "samples_per_class = " + std::to_string(cfg.data.samples_per_class) + "\n";
    out += "input_dim = " + std::to_string(cfg.data.input_dim) + "\n";
    out += "cluster_spread = " + fmt_double(cfg.data.cluster_spread) + "\n";
    out += "cluster_separation = " + fmt_double(cfg.data.cluster_separation) + "\n";
    out += "seed = " + std::to_string(cfg.data.seed) + "\n";
    out += "[ablation]\n";
    out += std::string("random_a = ") + (cfg.ablation.random_a ? "true" : "false") + "\n";
    out += std::string("no_memory_update = ") +
           (cfg.ablation.no_memory_update ? "true" : "false") + "\n";
    out += std::string("weighted_a_avg = ") +
           (cfg.ablation.weighted_a_avg ? "true" : "false") + "\n";
    return out;
}

}  // namespace dolfin
