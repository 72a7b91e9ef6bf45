#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "infoneat/data.hpp"
#include "infoneat/ensemble.hpp"
#include "infoneat/errors.hpp"

namespace infoneat {

// Plain-text `key = value` configuration; '#' starts a comment, blank lines
// are ignored.
class KeyValueConfig {
public:
    static KeyValueConfig from_text(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trim = [](std::string s) {
                const auto begin = s.find_first_not_of(" \t\r");
                if (begin == std::string::npos) return std::string();
                const auto end = s.find_last_not_of(" \t\r");
                return s.substr(begin, end - begin + 1);
            };
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw FormatError("config line " + std::to_string(lineno) + ": empty key");
            }
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file " + path);
        std::ostringstream text;
        text << in.rdbuf();
        return from_text(text.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw FormatError("config key '" + key + "': expected a number, got '" + it->second + "'");
        }
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw FormatError("config key '" + key + "': expected an integer, got '" + it->second + "'");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw FormatError("config key '" + key + "': expected an unsigned integer");
        }
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<int> out;
        std::istringstream fields(it->second);
        std::string field;
        while (std::getline(fields, field, ',')) {
            if (field.empty()) continue;
            try {
                out.push_back(std::stoi(field));
            } catch (const std::exception&) {
                throw FormatError("config key '" + key + "': expected comma-separated integers");
            }
        }
        return out;
    }

    std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::istringstream fields(it->second);
        std::string field;
        while (std::getline(fields, field, ',')) {
            if (field.empty()) continue;
            try {
                out.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw FormatError("config key '" + key + "': expected comma-separated numbers");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// Everything one run needs: paths, evolution and stacking parameters with
// their shipped defaults, synthetic-set shape, attack protocol, and the
// mandatory master seed.
struct RunConfig {
    // paths
    std::string out_dir = "out";
    std::string dataset_path;         // default: <out>/train.traces
    std::string attack_dataset_path;  // default: <out>/attack.traces
    std::string model_path;           // default: <out>/model.stacked

    EnsembleConfig ensemble;
    int per_class_cap = 150;  // undersampling cap applied before training

    SynthSpec synth;
    int synth_attack_traces = 1000;

    std::vector<int> attack_trace_counts = {1, 2, 5, 10, 20, 30, 50, 75, 100, 150, 200};
    int attack_repetitions = 50;
    std::vector<double> tge_thresholds = {0.0, 1.0, 20.0, 50.0};

    std::optional<std::uint64_t> seed;
    int workers = 1;

    std::string train_path() const { return dataset_path.empty() ? out_dir + "/train.traces" : dataset_path; }
    std::string attack_path() const {
        return attack_dataset_path.empty() ? out_dir + "/attack.traces" : attack_dataset_path;
    }
    std::string model_file() const { return model_path.empty() ? out_dir + "/model.stacked" : model_path; }

    std::uint64_t require_seed(const char* command) const {
        if (!seed) {
            throw InputError(std::string(command) +
                             ": a master seed is mandatory (set --seed or the `seed` config key)");
        }
        return *seed;
    }

    void apply(const KeyValueConfig& kv) {
        EvolutionConfig& evo = ensemble.evolution;
        evo.population_size = kv.get_int("population_size", evo.population_size);
        evo.initial_compatibility_threshold =
            kv.get_double("initial_compatibility_threshold", evo.initial_compatibility_threshold);
        evo.initial_num_hidden = kv.get_int("initial_num_hidden", evo.initial_num_hidden);
        evo.fitness_threshold = kv.get_double("fitness_threshold", evo.fitness_threshold);
        evo.connection_add_prob = kv.get_double("connection_add_prob", evo.connection_add_prob);
        evo.node_add_prob = kv.get_double("node_add_prob", evo.node_add_prob);
        evo.max_generations = kv.get_int("max_generations", evo.max_generations);
        evo.weight_mutate_rate = kv.get_double("weight_mutate_rate", evo.weight_mutate_rate);
        evo.bias_mutate_rate = kv.get_double("bias_mutate_rate", evo.bias_mutate_rate);
        evo.mutate_power = kv.get_double("mutate_power", evo.mutate_power);
        evo.crossover_rate = kv.get_double("crossover_rate", evo.crossover_rate);
        evo.disjoint_coefficient = kv.get_double("disjoint_coefficient", evo.disjoint_coefficient);
        evo.weight_coefficient = kv.get_double("weight_coefficient", evo.weight_coefficient);
        evo.tournament_size = kv.get_int("tournament_size", evo.tournament_size);
        evo.batch_size = kv.get_int("batch_size", evo.batch_size);
        evo.target_species = kv.get_int("target_species", evo.target_species);
        evo.stagnation_limit = kv.get_int("stagnation_limit", evo.stagnation_limit);
        evo.weight_clamp = kv.get_double("weight_clamp", evo.weight_clamp);
        evo.alpha = kv.get_double("alpha", evo.alpha);

        ensemble.holdout_per_class = kv.get_int("holdout_per_class", ensemble.holdout_per_class);
        ensemble.meta_l2 = kv.get_double("meta_l2", ensemble.meta_l2);
        ensemble.meta_max_iters = kv.get_int("meta_max_iters", ensemble.meta_max_iters);
        ensemble.meta_tol = kv.get_double("meta_tol", ensemble.meta_tol);
        per_class_cap = kv.get_int("per_class_cap", per_class_cap);

        synth.n_classes = kv.get_int("synth_classes", synth.n_classes);
        synth.n_per_class = kv.get_int("synth_per_class", synth.n_per_class);
        synth.n_features = kv.get_int("synth_features", synth.n_features);
        synth.informative_indices = kv.get_int_list("synth_informative", synth.informative_indices);
        synth.noise_sigma = kv.get_double("synth_noise_sigma", synth.noise_sigma);
        synth.desync_window = kv.get_int("synth_desync_window", synth.desync_window);
        synth.key = static_cast<std::uint8_t>(kv.get_int("synth_key", synth.key));
        synth_attack_traces = kv.get_int("synth_attack_traces", synth_attack_traces);

        attack_trace_counts = kv.get_int_list("attack_trace_counts", attack_trace_counts);
        attack_repetitions = kv.get_int("attack_repetitions", attack_repetitions);
        tge_thresholds = kv.get_double_list("tge_thresholds", tge_thresholds);

        out_dir = kv.get_string("out", out_dir);
        dataset_path = kv.get_string("dataset", dataset_path);
        attack_dataset_path = kv.get_string("attack_dataset", attack_dataset_path);
        model_path = kv.get_string("model", model_path);
        workers = kv.get_int("workers", workers);
        if (kv.has("seed")) seed = kv.get_u64("seed", 0);
    }

    static RunConfig from_file(const std::string& path) {
        RunConfig cfg;
        cfg.apply(KeyValueConfig::from_file(path));
        return cfg;
    }

    // Canonical key=value dump of every effective setting; the model file
    // stores its FNV-1a hash as the configuration fingerprint.
    std::string canonical_text() const {
        const EvolutionConfig& evo = ensemble.evolution;
        std::ostringstream out;
        auto emit = [&out](const std::string& key, const auto& value) {
            out << key << '=' << value << '\n';
        };
        emit("alpha", evo.alpha);
        emit("attack_repetitions", attack_repetitions);
        out << "attack_trace_counts=";
        for (std::size_t i = 0; i < attack_trace_counts.size(); ++i) {
            out << (i ? "," : "") << attack_trace_counts[i];
        }
        out << '\n';
        emit("batch_size", evo.batch_size);
        emit("bias_mutate_rate", evo.bias_mutate_rate);
        emit("connection_add_prob", evo.connection_add_prob);
        emit("crossover_rate", evo.crossover_rate);
        emit("disjoint_coefficient", evo.disjoint_coefficient);
        emit("fitness_threshold", evo.fitness_threshold);
        emit("holdout_per_class", ensemble.holdout_per_class);
        emit("initial_compatibility_threshold", evo.initial_compatibility_threshold);
        emit("initial_num_hidden", evo.initial_num_hidden);
        emit("max_generations", evo.max_generations);
        emit("meta_l2", ensemble.meta_l2);
        emit("meta_max_iters", ensemble.meta_max_iters);
        emit("meta_tol", ensemble.meta_tol);
        emit("mutate_power", evo.mutate_power);
        emit("node_add_prob", evo.node_add_prob);
        emit("per_class_cap", per_class_cap);
        emit("population_size", evo.population_size);
        emit("stagnation_limit", evo.stagnation_limit);
        emit("synth_attack_traces", synth_attack_traces);
        emit("synth_classes", synth.n_classes);
        emit("synth_desync_window", synth.desync_window);
        emit("synth_features", synth.n_features);
        out << "synth_informative=";
        for (std::size_t i = 0; i < synth.informative_indices.size(); ++i) {
            out << (i ? "," : "") << synth.informative_indices[i];
        }
        out << '\n';
        emit("synth_key", static_cast<int>(synth.key));
        emit("synth_noise_sigma", synth.noise_sigma);
        emit("synth_per_class", synth.n_per_class);
        emit("target_species", evo.target_species);
        out << "tge_thresholds=";
        for (std::size_t i = 0; i < tge_thresholds.size(); ++i) {
            out << (i ? "," : "") << tge_thresholds[i];
        }
        out << '\n';
        emit("tournament_size", evo.tournament_size);
        emit("weight_clamp", evo.weight_clamp);
        emit("weight_coefficient", evo.weight_coefficient);
        emit("weight_mutate_rate", evo.weight_mutate_rate);
        if (seed) emit("seed", *seed);
        return out.str();
    }

    std::uint64_t fingerprint() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : canonical_text()) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }
};

}  // namespace infoneat
