#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "infoneat/errors.hpp"
#include "infoneat/genome.hpp"

namespace infoneat {

struct EvolutionConfig {
    int population_size = 16;                     // N
    double initial_compatibility_threshold = 1.8; // t_c
    int initial_num_hidden = 10;                  // n_h
    double fitness_threshold = 0.0;               // L_TH
    double connection_add_prob = 0.8;             // P_c
    double node_add_prob = 1.0;                   // P_n
    int max_generations = 30;                     // T
    double weight_mutate_rate = 0.8;              // P_w
    double bias_mutate_rate = 0.7;                // P_b
    double mutate_power = 0.5;                    // stddev of weight/bias perturbations
    double crossover_rate = 0.75;
    double disjoint_coefficient = 1.0;            // c1
    double weight_coefficient = 0.5;              // c2
    int tournament_size = 3;
    int batch_size = 150;
    int target_species = 4;                       // steering goal for threshold adaptation
    int stagnation_limit = 15;
    double weight_clamp = 0.0;                    // 0 -> resolve to 3x the largest init sigma
    double alpha = 1.01;                          // entropy order for the CMI criteria

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (population_size < 2) throw InputError("population_size must be >= 2");
        if (max_generations < 1) throw InputError("max_generations must be >= 1");
        if (!prob(connection_add_prob) || !prob(node_add_prob) || !prob(weight_mutate_rate) ||
            !prob(bias_mutate_rate) || !prob(crossover_rate)) {
            throw InputError("mutation/crossover probabilities must lie in [0, 1]");
        }
        if (initial_num_hidden < 0) throw InputError("initial_num_hidden must be >= 0");
        if (tournament_size < 1) throw InputError("tournament_size must be >= 1");
        if (batch_size < 2) throw InputError("batch_size must be >= 2");
        if (!(initial_compatibility_threshold > 0.0)) {
            throw InputError("initial_compatibility_threshold must be positive");
        }
    }

    EvolutionConfig resolved_for(int n_inputs, int n_outputs) const {
        EvolutionConfig c = *this;
        if (c.weight_clamp <= 0.0) {
            c.weight_clamp = 3.0 * InitSpec::xavier(n_inputs, initial_num_hidden, n_outputs).max_sigma();
        }
        return c;
    }
};

// Fitness batch: pre-scaled feature rows plus class ids (the one-hot width is
// n_classes).
struct LabeledBatch {
    Eigen::MatrixXd inputs;
    std::vector<int> labels;
    int n_classes = 0;

    int size() const { return static_cast<int>(inputs.rows()); }
};

// Mean categorical cross-entropy (natural log), probabilities clipped to
// [eps, 1 - eps] so a confident miss stays finite.
inline double log_loss(const NetworkEvaluator& eval, const LabeledBatch& batch) {
    constexpr double eps = 1e-12;
    if (batch.size() == 0) throw InputError("log_loss: empty batch");
    const Eigen::MatrixXd probs = eval.forward_collect(batch.inputs).probabilities;
    double total = 0.0;
    for (int i = 0; i < batch.size(); ++i) {
        const int label = batch.labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= static_cast<int>(probs.cols())) {
            throw InputError("log_loss: label outside prediction width");
        }
        const double p = std::clamp(probs(i, label), eps, 1.0 - eps);
        total -= std::log(p);
    }
    return total / batch.size();
}

inline double log_loss(const Genome& genome, const LabeledBatch& batch) {
    return log_loss(NetworkEvaluator(genome), batch);
}

// Distance = c1 * (unmatched genes / union size) + c2 * mean |weight delta|
// over matching innovations. The disjoint share saturates at 1 for genomes
// with no common history.
inline double genomic_distance(const Genome& a, const Genome& b, const EvolutionConfig& config) {
    std::size_t matching = 0;
    double weight_gap = 0.0;
    std::size_t ia = 0;
    std::size_t ib = 0;
    while (ia < a.connections.size() && ib < b.connections.size()) {
        const ConnectionGene& ca = a.connections[ia];
        const ConnectionGene& cb = b.connections[ib];
        if (ca.innovation == cb.innovation) {
            ++matching;
            weight_gap += std::abs(ca.weight - cb.weight);
            ++ia;
            ++ib;
        } else if (ca.innovation < cb.innovation) {
            ++ia;
        } else {
            ++ib;
        }
    }
    const std::size_t union_size = a.connections.size() + b.connections.size() - matching;
    const double disjoint_share =
        union_size == 0 ? 0.0
                        : static_cast<double>(union_size - matching) / static_cast<double>(union_size);
    const double mean_gap = matching == 0 ? 0.0 : weight_gap / static_cast<double>(matching);
    return config.disjoint_coefficient * disjoint_share + config.weight_coefficient * mean_gap;
}

struct Species {
    std::uint32_t id = 0;
    Genome representative;
    std::vector<Genome> members;
    double best_loss = std::numeric_limits<double>::infinity();
    std::uint32_t last_improved_generation = 0;

    const Genome& best() const {
        const Genome* best_g = &members.front();
        for (const Genome& g : members) {
            if (g.fitness < best_g->fitness ||
                (g.fitness == best_g->fitness && g.id < best_g->id)) {
                best_g = &g;
            }
        }
        return *best_g;
    }
};

// Greedy assignment: each genome joins the first species whose representative
// lies within the compatibility threshold, else founds a new one. Species ids
// and stagnation bookkeeping carry over from the previous generation.
inline std::vector<Species> speciate(std::vector<Genome> genomes, double threshold,
                                     const std::vector<Species>& previous,
                                     std::uint32_t& next_species_id,
                                     const EvolutionConfig& config) {
    if (!(threshold > 0.0)) throw InputError("speciate: threshold must be positive");
    std::vector<Species> result;
    result.reserve(previous.size());
    for (const Species& s : previous) {
        Species shell;
        shell.id = s.id;
        shell.representative = s.representative;
        shell.best_loss = s.best_loss;
        shell.last_improved_generation = s.last_improved_generation;
        result.push_back(std::move(shell));
    }
    const std::size_t carried = result.size();
    for (Genome& g : genomes) {
        bool placed = false;
        for (Species& s : result) {
            if (genomic_distance(g, s.representative, config) < threshold) {
                s.members.push_back(std::move(g));
                placed = true;
                break;
            }
        }
        if (!placed) {
            Species fresh;
            fresh.id = next_species_id++;
            fresh.representative = g;
            fresh.members.push_back(std::move(g));
            result.push_back(std::move(fresh));
        }
    }
    std::erase_if(result, [](const Species& s) { return s.members.empty(); });
    (void)carried;
    return result;
}

// Minimum-loss genome among a uniformly sampled subset of the species.
inline const Genome& tournament_select(const Species& species, int tournament_size,
                                       std::mt19937_64& rng) {
    if (species.members.empty()) throw InputError("tournament_select: empty species");
    const std::size_t n = species.members.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(tournament_size), n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {  // partial Fisher-Yates
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    const Genome* best = &species.members[idx[0]];
    for (std::size_t i = 1; i < k; ++i) {
        const Genome& g = species.members[idx[i]];
        if (g.fitness < best->fitness || (g.fitness == best->fitness && g.id < best->id)) {
            best = &g;
        }
    }
    return *best;
}

// Tracks historical markings. Identical structural changes within one
// generation receive identical numbers; the per-generation maps reset at the
// start of each reproduction phase while the counters only ever grow, so no
// innovation number is ever reused for a different change.
class InnovationRegistry {
public:
    InnovationRegistry(std::uint32_t next_innovation, std::uint32_t next_node_id)
        : next_innovation_(next_innovation), next_node_id_(next_node_id) {}

    void begin_generation() {
        connection_numbers_.clear();
        splits_.clear();
    }

    std::uint32_t connection_innovation(std::uint32_t from, std::uint32_t to) {
        const auto key = std::make_pair(from, to);
        auto it = connection_numbers_.find(key);
        if (it != connection_numbers_.end()) return it->second;
        const std::uint32_t num = next_innovation_++;
        connection_numbers_.emplace(key, num);
        return num;
    }

    struct SplitRecord {
        std::uint32_t node_id;
        std::uint32_t innovation_in;
        std::uint32_t innovation_out;
    };

    SplitRecord split(std::uint32_t connection_innovation_number) {
        auto it = splits_.find(connection_innovation_number);
        if (it != splits_.end()) return it->second;
        SplitRecord rec{next_node_id_++, next_innovation_++, next_innovation_++};
        splits_.emplace(connection_innovation_number, rec);
        return rec;
    }

    std::uint32_t peek_next_innovation() const { return next_innovation_; }
    std::uint32_t peek_next_node_id() const { return next_node_id_; }

private:
    std::uint32_t next_innovation_;
    std::uint32_t next_node_id_;
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> connection_numbers_;
    std::map<std::uint32_t, SplitRecord> splits_;
};

namespace detail {

inline bool path_exists(const Genome& g, std::uint32_t from, std::uint32_t to) {
    if (from == to) return true;
    std::vector<std::uint32_t> stack{from};
    std::set<std::uint32_t> seen{from};
    while (!stack.empty()) {
        const std::uint32_t cur = stack.back();
        stack.pop_back();
        for (const ConnectionGene& c : g.connections) {
            if (!c.enabled || c.from_node != cur) continue;
            if (c.to_node == to) return true;
            if (seen.insert(c.to_node).second) stack.push_back(c.to_node);
        }
    }
    return false;
}

}  // namespace detail

// Structural then parametric mutation. Connection adds are restricted to
// layer-increasing unconnected pairs, which keeps the enabled graph acyclic
// by construction; node adds split an enabled connection in the canonical
// way (in-edge weight 1, out-edge inherits, original disabled).
inline Genome mutate(const Genome& parent, const EvolutionConfig& config,
                     InnovationRegistry& registry, std::mt19937_64& rng) {
    Genome g = parent;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double clamp_bound = config.weight_clamp > 0.0 ? config.weight_clamp : 3.0;

    if (coin(rng) < config.connection_add_prob) {
        const LayerAssignment layers = assign_layers(g);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates;
        for (const NodeGene& from : g.nodes) {
            if (from.kind == NodeKind::output) continue;
            for (const NodeGene& to : g.nodes) {
                if (to.kind == NodeKind::input) continue;
                if (from.id == to.id) continue;
                if (layers.layer_of.at(from.id) >= layers.layer_of.at(to.id)) continue;
                if (g.has_connection(from.id, to.id)) continue;
                candidates.emplace_back(from.id, to.id);
            }
        }
        if (!candidates.empty()) {  // no legal pair -> structural no-op
            std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
            const auto [from, to] = candidates[pick(rng)];
            std::normal_distribution<double> weight_dist(0.0, config.mutate_power);
            const double w = std::clamp(weight_dist(rng), -clamp_bound, clamp_bound);
            g.connections.push_back({registry.connection_innovation(from, to), from, to, w, true});
            g.sort_genes();
        }
    }

    if (coin(rng) < config.node_add_prob) {
        std::vector<std::size_t> enabled;
        for (std::size_t i = 0; i < g.connections.size(); ++i) {
            if (g.connections[i].enabled) enabled.push_back(i);
        }
        if (!enabled.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, enabled.size() - 1);
            ConnectionGene& split_conn = g.connections[enabled[pick(rng)]];
            const auto rec = registry.split(split_conn.innovation);
            split_conn.enabled = false;
            g.nodes.push_back({rec.node_id, NodeKind::hidden, 0.0, ActivationKind::leaky_relu});
            g.connections.push_back(
                {rec.innovation_in, split_conn.from_node, rec.node_id, 1.0, true});
            g.connections.push_back(
                {rec.innovation_out, rec.node_id, split_conn.to_node, split_conn.weight, true});
            g.sort_genes();
        }
    }

    std::normal_distribution<double> perturb(0.0, config.mutate_power);
    for (ConnectionGene& c : g.connections) {
        if (coin(rng) < config.weight_mutate_rate) {
            c.weight = std::clamp(c.weight + perturb(rng), -clamp_bound, clamp_bound);
        }
    }
    for (NodeGene& n : g.nodes) {
        if (n.kind == NodeKind::input) continue;
        if (coin(rng) < config.bias_mutate_rate) {
            n.bias = std::clamp(n.bias + perturb(rng), -clamp_bound, clamp_bound);
        }
    }
    g.fitness = std::numeric_limits<double>::quiet_NaN();
    return g;
}

// Historical-marking crossover: matching genes come from either parent
// uniformly at random, disjoint genes from both parents are appended.
// A disjoint gene that would close a cycle in the offspring is dropped; a
// duplicate (from, to) pair keeps only its first occurrence.
inline Genome crossover(const Genome& parent_a, const Genome& parent_b, std::mt19937_64& rng) {
    if (parent_a.n_inputs != parent_b.n_inputs || parent_a.n_outputs != parent_b.n_outputs) {
        throw InputError("crossover: parents expose different interfaces");
    }
    std::uniform_int_distribution<int> coin(0, 1);

    Genome child;
    child.n_inputs = parent_a.n_inputs;
    child.n_outputs = parent_a.n_outputs;

    std::map<std::uint32_t, const ConnectionGene*> genes_a;
    std::map<std::uint32_t, const ConnectionGene*> genes_b;
    for (const ConnectionGene& c : parent_a.connections) genes_a.emplace(c.innovation, &c);
    for (const ConnectionGene& c : parent_b.connections) genes_b.emplace(c.innovation, &c);

    std::set<std::uint32_t> innovations;
    for (const auto& [num, gene] : genes_a) innovations.insert(num);
    for (const auto& [num, gene] : genes_b) innovations.insert(num);

    std::set<std::pair<std::uint32_t, std::uint32_t>> endpoints_used;
    for (std::uint32_t num : innovations) {
        const auto in_a = genes_a.find(num);
        const auto in_b = genes_b.find(num);
        const ConnectionGene* chosen = nullptr;
        bool matching = false;
        if (in_a != genes_a.end() && in_b != genes_b.end()) {
            chosen = coin(rng) == 0 ? in_a->second : in_b->second;
            matching = true;
        } else {
            chosen = in_a != genes_a.end() ? in_a->second : in_b->second;
        }
        const auto key = std::make_pair(chosen->from_node, chosen->to_node);
        if (endpoints_used.count(key)) continue;  // same pair rediscovered in another generation
        if (chosen->enabled && !matching) {
            // Appending a disjoint gene may only stand if it keeps the
            // enabled graph acyclic.
            if (detail::path_exists(child, chosen->to_node, chosen->from_node)) continue;
        }
        child.connections.push_back(*chosen);
        endpoints_used.insert(key);
    }

    // Interface nodes always exist; hidden nodes only where referenced.
    std::set<std::uint32_t> needed;
    for (const ConnectionGene& c : child.connections) {
        needed.insert(c.from_node);
        needed.insert(c.to_node);
    }
    std::map<std::uint32_t, const NodeGene*> nodes_a;
    std::map<std::uint32_t, const NodeGene*> nodes_b;
    for (const NodeGene& n : parent_a.nodes) nodes_a.emplace(n.id, &n);
    for (const NodeGene& n : parent_b.nodes) nodes_b.emplace(n.id, &n);

    std::set<std::uint32_t> node_ids;
    for (const NodeGene& n : parent_a.nodes) {
        if (n.kind != NodeKind::hidden) node_ids.insert(n.id);
    }
    for (std::uint32_t id : needed) node_ids.insert(id);

    for (std::uint32_t id : node_ids) {
        const auto in_a = nodes_a.find(id);
        const auto in_b = nodes_b.find(id);
        const NodeGene* chosen = nullptr;
        if (in_a != nodes_a.end() && in_b != nodes_b.end()) {
            chosen = coin(rng) == 0 ? in_a->second : in_b->second;
        } else if (in_a != nodes_a.end()) {
            chosen = in_a->second;
        } else if (in_b != nodes_b.end()) {
            chosen = in_b->second;
        } else {
            throw StructureError("crossover: connection references a node neither parent owns");
        }
        child.nodes.push_back(*chosen);
    }
    child.sort_genes();
    child.fitness = std::numeric_limits<double>::quiet_NaN();
    return child;
}

struct Population {
    std::vector<Species> species;
    std::uint32_t generation = 1;
    double compatibility_threshold = 1.8;
    InnovationRegistry registry{0, 0};
    std::uint32_t next_genome_id = 0;
    std::uint32_t next_species_id = 0;
    bool fitness_goal_reached = false;

    int total_members() const {
        int n = 0;
        for (const Species& s : species) n += static_cast<int>(s.members.size());
        return n;
    }

    const Genome& best_genome() const {
        const Genome* best = nullptr;
        for (const Species& s : species) {
            for (const Genome& g : s.members) {
                if (!best || g.fitness < best->fitness ||
                    (g.fitness == best->fitness && g.id < best->id)) {
                    best = &g;
                }
            }
        }
        if (!best) throw InputError("best_genome: empty population");
        return *best;
    }

    std::vector<const Genome*> all_members() const {
        std::vector<const Genome*> out;
        for (const Species& s : species) {
            for (const Genome& g : s.members) out.push_back(&g);
        }
        return out;
    }
};

inline void evaluate_population(Population& pop, const LabeledBatch& batch) {
    for (Species& s : pop.species) {
        for (Genome& g : s.members) {
            if (!g.has_fitness()) g.fitness = log_loss(g, batch);
        }
    }
}

// First generation: population_size minimal genomes sharing one innovation
// numbering, speciated under the initial threshold.
inline Population initial_population(int n_inputs, int n_outputs, const EvolutionConfig& config,
                                     std::mt19937_64& rng) {
    config.validate();
    const InitSpec init = InitSpec::xavier(n_inputs, config.initial_num_hidden, n_outputs);
    std::vector<Genome> genomes;
    std::uint32_t max_innovation = 0;
    std::uint32_t max_node = 0;
    for (int i = 0; i < config.population_size; ++i) {
        Genome g = new_minimal(n_inputs, n_outputs, config.initial_num_hidden, init, rng);
        g.id = static_cast<std::uint32_t>(i);
        if (!g.connections.empty()) {
            max_innovation = std::max(max_innovation, g.connections.back().innovation + 1);
        }
        max_node = std::max(max_node, g.nodes.back().id + 1);
        genomes.push_back(std::move(g));
    }

    Population pop;
    pop.generation = 1;
    pop.compatibility_threshold = config.initial_compatibility_threshold;
    pop.registry = InnovationRegistry(max_innovation, max_node);
    pop.next_genome_id = static_cast<std::uint32_t>(config.population_size);
    pop.next_species_id = 0;
    pop.species = speciate(std::move(genomes), pop.compatibility_threshold, {}, pop.next_species_id,
                           config);
    return pop;
}

namespace detail {

inline std::vector<int> allocate_offspring(const std::vector<Species>& species, int total) {
    // Proportional to inverse mean loss, largest remainder, minimum one slot
    // per surviving species.
    const int n = static_cast<int>(species.size());
    std::vector<double> weight(static_cast<std::size_t>(n));
    double weight_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (const Genome& g : species[static_cast<std::size_t>(i)].members) mean += g.fitness;
        mean /= static_cast<double>(species[static_cast<std::size_t>(i)].members.size());
        weight[static_cast<std::size_t>(i)] = 1.0 / std::max(mean, 1e-9);
        weight_sum += weight[static_cast<std::size_t>(i)];
    }
    std::vector<int> quota(static_cast<std::size_t>(n), 1);
    int assigned = n;
    std::vector<std::pair<double, int>> remainders;
    for (int i = 0; i < n; ++i) {
        const double exact = weight[static_cast<std::size_t>(i)] / weight_sum *
                             static_cast<double>(total);
        const int extra = std::max(0, static_cast<int>(std::floor(exact)) - 1);
        quota[static_cast<std::size_t>(i)] += extra;
        assigned += extra;
        remainders.emplace_back(exact - std::floor(exact), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size()) {
        ++quota[static_cast<std::size_t>(remainders[i].second)];
        ++assigned;
    }
    while (assigned > total) {  // trim the largest quotas, never below 1
        auto it = std::max_element(quota.begin(), quota.end());
        if (*it <= 1) break;
        --*it;
        --assigned;
    }
    return quota;
}

}  // namespace detail

// One step of the evolutionary loop: evaluate, cull stagnant species,
// allocate offspring proportionally to inverse mean loss, reproduce with
// elitism of one per species, re-speciate, and adapt the compatibility
// threshold toward the target species count.
inline Population evolve_generation(const Population& population, const LabeledBatch& batch,
                                    const EvolutionConfig& config, std::mt19937_64& rng) {
    config.validate();
    Population current = population;
    evaluate_population(current, batch);

    double best_loss = std::numeric_limits<double>::infinity();
    for (const Species& s : current.species) best_loss = std::min(best_loss, s.best().fitness);
    current.fitness_goal_reached = best_loss <= config.fitness_threshold;

    // Stagnation bookkeeping, then removal (the species holding the
    // population best is immune).
    for (Species& s : current.species) {
        const double species_best = s.best().fitness;
        if (species_best < s.best_loss) {
            s.best_loss = species_best;
            s.last_improved_generation = current.generation;
        }
    }
    const std::uint32_t best_species_id = [&] {
        const Genome& b = current.best_genome();
        for (const Species& s : current.species) {
            for (const Genome& g : s.members) {
                if (g.id == b.id) return s.id;
            }
        }
        return current.species.front().id;
    }();
    std::erase_if(current.species, [&](const Species& s) {
        return s.id != best_species_id &&
               current.generation - s.last_improved_generation >=
                   static_cast<std::uint32_t>(config.stagnation_limit);
    });

    current.registry.begin_generation();
    const std::vector<int> quota =
        detail::allocate_offspring(current.species, config.population_size);

    std::vector<Genome> offspring;
    offspring.reserve(static_cast<std::size_t>(config.population_size));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    for (std::size_t si = 0; si < current.species.size(); ++si) {
        const Species& s = current.species[si];
        offspring.push_back(s.best());  // elite survives unmodified, id and all
        for (int k = 1; k < quota[si]; ++k) {
            Genome child;
            if (s.members.size() >= 2 && coin(rng) < config.crossover_rate) {
                const Genome& a = tournament_select(s, config.tournament_size, rng);
                const Genome& b = tournament_select(s, config.tournament_size, rng);
                child = (a.id == b.id) ? mutate(a, config, current.registry, rng)
                                       : mutate(crossover(a, b, rng), config, current.registry, rng);
            } else {
                child = mutate(tournament_select(s, config.tournament_size, rng), config,
                               current.registry, rng);
            }
            child.id = current.next_genome_id++;
            child.generation_born = current.generation + 1;
            offspring.push_back(std::move(child));
        }
    }

    // Representatives for the next generation are the per-species elites.
    std::vector<Species> shells;
    for (const Species& s : current.species) {
        Species shell;
        shell.id = s.id;
        shell.representative = s.best();
        shell.best_loss = s.best_loss;
        shell.last_improved_generation = s.last_improved_generation;
        shells.push_back(std::move(shell));
    }

    Population next;
    next.generation = current.generation + 1;
    next.registry = current.registry;
    next.next_genome_id = current.next_genome_id;
    next.next_species_id = current.next_species_id;
    next.fitness_goal_reached = current.fitness_goal_reached;
    next.species = speciate(std::move(offspring), current.compatibility_threshold, shells,
                            next.next_species_id, config);

    const int n_species = static_cast<int>(next.species.size());
    double threshold = current.compatibility_threshold;
    if (n_species > config.target_species) {
        threshold += 0.1;
    } else if (n_species < config.target_species) {
        threshold = std::max(0.1, threshold - 0.1);
    }
    next.compatibility_threshold = threshold;

    evaluate_population(next, batch);
    return next;
}

}  // namespace infoneat
