#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "infoneat/evolution.hpp"

using namespace infoneat;

namespace {

EvolutionConfig small_config() {
    EvolutionConfig cfg;
    cfg.population_size = 16;
    cfg.batch_size = 16;
    cfg.weight_clamp = 3.0;
    return cfg;
}

// Two interleaved Gaussian blobs on two features; trivially separable.
LabeledBatch two_class_batch(int n, double separation, std::mt19937_64& rng) {
    LabeledBatch batch;
    batch.n_classes = 2;
    batch.inputs.resize(n, 2);
    batch.labels.resize(static_cast<std::size_t>(n));
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        batch.labels[static_cast<std::size_t>(i)] = label;
        const double center = label == 0 ? 0.25 : 0.25 + separation;
        batch.inputs(i, 0) = center + noise(rng);
        batch.inputs(i, 1) = 1.0 - center + noise(rng);
    }
    return batch;
}

Genome minimal_genome(std::mt19937_64& rng, int hidden = 2) {
    return new_minimal(2, 2, hidden, InitSpec::xavier(2, hidden, 2), rng);
}

}  // namespace

TEST_CASE("log_loss") {
    std::mt19937_64 rng(1);
    SECTION("perfect one-hot prediction is about zero") {
        // Craft a genome that saturates one output: huge bias difference.
        Genome g = minimal_genome(rng, 0);
        for (ConnectionGene& c : g.connections) c.weight = 0.0;
        g.nodes[2].bias = 60.0;   // output for class 0
        g.nodes[3].bias = -60.0;  // output for class 1
        LabeledBatch batch;
        batch.n_classes = 2;
        batch.inputs = Eigen::MatrixXd::Zero(4, 2);
        batch.labels = {0, 0, 0, 0};
        CHECK(log_loss(g, batch) <= 1e-11);
    }
    SECTION("uniform prediction over 16 classes gives ln 16") {
        std::mt19937_64 rng16(2);
        Genome g = new_minimal(2, 16, 0, InitSpec::xavier(2, 0, 16), rng16);
        for (ConnectionGene& c : g.connections) c.weight = 0.0;
        for (NodeGene& n : g.nodes) n.bias = 0.0;
        LabeledBatch batch;
        batch.n_classes = 16;
        batch.inputs = Eigen::MatrixXd::Zero(8, 2);
        batch.labels = {0, 3, 7, 15, 2, 9, 11, 4};
        CHECK(log_loss(g, batch) == Catch::Approx(std::log(16.0)).epsilon(1e-9));
    }
    SECTION("agrees with a direct double-loop oracle") {
        std::mt19937_64 rng3(3);
        const Genome g = minimal_genome(rng3);
        LabeledBatch batch = two_class_batch(24, 0.5, rng3);
        const NetworkEvaluator eval(g);
        const Eigen::MatrixXd probs = eval.forward_collect(batch.inputs).probabilities;
        double expected = 0.0;
        for (int i = 0; i < batch.size(); ++i) {
            for (int k = 0; k < 2; ++k) {
                const double y = batch.labels[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
                expected -= y * std::log(std::clamp(probs(i, k), 1e-12, 1.0 - 1e-12));
            }
        }
        expected /= batch.size();
        CHECK(log_loss(g, batch) == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("genomic_distance") {
    std::mt19937_64 rng(7);
    const EvolutionConfig cfg = small_config();
    SECTION("identical genomes are at distance zero") {
        const Genome g = minimal_genome(rng);
        CHECK(genomic_distance(g, g, cfg) == 0.0);
    }
    SECTION("fully disjoint genomes saturate the structural term at 1") {
        Genome a = minimal_genome(rng);
        Genome b = a;
        for (ConnectionGene& c : b.connections) c.innovation += 1000;
        EvolutionConfig c1_only = cfg;
        c1_only.disjoint_coefficient = 1.0;
        c1_only.weight_coefficient = 0.0;
        CHECK(genomic_distance(a, b, c1_only) == Catch::Approx(1.0));
    }
    SECTION("hand-evaluated mixed case") {
        // Shared innovations {1, 2} with weight gaps {0.5, 1.5}; one extra
        // gene on each side -> union 4, disjoint 2.
        Genome a;
        a.n_inputs = a.n_outputs = 1;
        a.connections = {{1, 0, 1, 1.0, true}, {2, 0, 2, 1.0, true}, {3, 0, 3, 1.0, true}};
        Genome b;
        b.n_inputs = b.n_outputs = 1;
        b.connections = {{1, 0, 1, 1.5, true}, {2, 0, 2, -0.5, true}, {4, 0, 4, 1.0, true}};
        EvolutionConfig hand = cfg;
        hand.disjoint_coefficient = 1.0;
        hand.weight_coefficient = 0.5;
        const double expected = 1.0 * (2.0 / 4.0) + 0.5 * ((0.5 + 1.5) / 2.0);
        CHECK(genomic_distance(a, b, hand) == Catch::Approx(expected));
        CHECK(genomic_distance(b, a, hand) == Catch::Approx(expected));
    }
}

TEST_CASE("speciate") {
    const EvolutionConfig cfg = small_config();
    std::mt19937_64 rng(11);
    SECTION("identical genomes form one species") {
        const Genome g = minimal_genome(rng);
        std::vector<Genome> genomes(5, g);
        for (std::size_t i = 0; i < genomes.size(); ++i) genomes[i].id = static_cast<std::uint32_t>(i);
        std::uint32_t next_id = 0;
        const std::vector<Species> species = speciate(genomes, 1.8, {}, next_id, cfg);
        CHECK(species.size() == 1);
        CHECK(species[0].members.size() == 5);
    }
    SECTION("two distant clusters split") {
        Genome a = minimal_genome(rng);
        Genome far = a;
        for (ConnectionGene& c : far.connections) c.innovation += 500;
        std::vector<Genome> genomes{a, a, far, far};
        for (std::size_t i = 0; i < genomes.size(); ++i) genomes[i].id = static_cast<std::uint32_t>(i);
        std::uint32_t next_id = 0;
        const std::vector<Species> species = speciate(genomes, 0.9, {}, next_id, cfg);
        CHECK(species.size() == 2);
    }
    SECTION("an enormous threshold collapses everything") {
        Genome a = minimal_genome(rng);
        Genome far = a;
        for (ConnectionGene& c : far.connections) c.innovation += 500;
        std::vector<Genome> genomes{a, far};
        std::uint32_t next_id = 0;
        const std::vector<Species> species = speciate(genomes, 1e9, {}, next_id, cfg);
        CHECK(species.size() == 1);
    }
    SECTION("members stay within threshold of their representative") {
        std::vector<Genome> genomes;
        for (int i = 0; i < 12; ++i) {
            Genome g = minimal_genome(rng);
            g.id = static_cast<std::uint32_t>(i);
            genomes.push_back(std::move(g));
        }
        std::uint32_t next_id = 0;
        const double threshold = 0.35;
        const std::vector<Species> species = speciate(genomes, threshold, {}, next_id, cfg);
        std::size_t total = 0;
        for (const Species& s : species) {
            total += s.members.size();
            for (const Genome& g : s.members) {
                CHECK(genomic_distance(g, s.representative, cfg) < threshold);
            }
        }
        CHECK(total == genomes.size());
    }
}

TEST_CASE("tournament_select") {
    std::mt19937_64 rng(13);
    Species species;
    species.id = 0;
    SECTION("species of one returns that genome") {
        Genome g = minimal_genome(rng);
        g.fitness = 1.0;
        species.members = {g};
        species.representative = g;
        CHECK(tournament_select(species, 3, rng).id == g.id);
    }
    SECTION("tournament covering the species returns the global best") {
        for (int i = 0; i < 5; ++i) {
            Genome g = minimal_genome(rng);
            g.id = static_cast<std::uint32_t>(i);
            g.fitness = 1.0 - 0.1 * i;  // id 4 is best
            species.members.push_back(std::move(g));
        }
        species.representative = species.members[0];
        CHECK(tournament_select(species, 50, rng).id == 4);
    }
    SECTION("selection is biased toward better genomes") {
        species.members.clear();
        for (int i = 0; i < 3; ++i) {
            Genome g = minimal_genome(rng);
            g.id = static_cast<std::uint32_t>(i);
            g.fitness = 0.1 * (i + 1);  // id 0 best, id 2 worst
            species.members.push_back(std::move(g));
        }
        species.representative = species.members[0];
        int best_count = 0;
        int worst_count = 0;
        for (int draw = 0; draw < 10000; ++draw) {
            const Genome& pick = tournament_select(species, 2, rng);
            if (pick.id == 0) ++best_count;
            if (pick.id == 2) ++worst_count;
        }
        CHECK(best_count > worst_count);
    }
}

TEST_CASE("crossover") {
    std::mt19937_64 rng(17);
    SECTION("identical parents reproduce themselves") {
        const Genome p = minimal_genome(rng);
        const Genome child = crossover(p, p, rng);
        REQUIRE(child.connections.size() == p.connections.size());
        for (std::size_t i = 0; i < p.connections.size(); ++i) {
            CHECK(child.connections[i].innovation == p.connections[i].innovation);
            CHECK(child.connections[i].weight == p.connections[i].weight);
        }
        CHECK(child.nodes.size() == p.nodes.size());
    }
    SECTION("disjoint innovation sets union") {
        Genome a = minimal_genome(rng);
        Genome b = a;
        for (ConnectionGene& c : b.connections) c.innovation += 100;
        const Genome child = crossover(a, b, rng);
        std::set<std::uint32_t> expected;
        for (const ConnectionGene& c : a.connections) expected.insert(c.innovation);
        for (const ConnectionGene& c : b.connections) expected.insert(c.innovation);
        // Both parents wire the same (from, to) pairs, so duplicates collapse
        // to the first innovation of each pair.
        std::set<std::uint32_t> got;
        for (const ConnectionGene& c : child.connections) got.insert(c.innovation);
        for (std::uint32_t innovation : got) CHECK(expected.count(innovation) == 1);
        CHECK(got.size() == a.connections.size());
    }
    SECTION("offspring genes always come from a parent") {
        EvolutionConfig cfg = small_config();
        InnovationRegistry registry(1000, 100);
        for (int trial = 0; trial < 1000; ++trial) {
            registry.begin_generation();
            Genome a = minimal_genome(rng);
            Genome b = mutate(a, cfg, registry, rng);
            b = mutate(b, cfg, registry, rng);
            const Genome child = crossover(a, b, rng);
            std::set<std::uint32_t> parent_innovations;
            for (const ConnectionGene& c : a.connections) parent_innovations.insert(c.innovation);
            for (const ConnectionGene& c : b.connections) parent_innovations.insert(c.innovation);
            for (const ConnectionGene& c : child.connections) {
                CHECK(parent_innovations.count(c.innovation) == 1);
            }
            validate_genome(child);
        }
    }
}

TEST_CASE("mutate") {
    std::mt19937_64 rng(19);
    EvolutionConfig cfg = small_config();
    SECTION("all rates zero leaves the genome unchanged") {
        cfg.connection_add_prob = 0.0;
        cfg.node_add_prob = 0.0;
        cfg.weight_mutate_rate = 0.0;
        cfg.bias_mutate_rate = 0.0;
        InnovationRegistry registry(100, 50);
        const Genome g = minimal_genome(rng);
        const Genome mutated = mutate(g, cfg, registry, rng);
        REQUIRE(mutated.connections.size() == g.connections.size());
        for (std::size_t i = 0; i < g.connections.size(); ++i) {
            CHECK(mutated.connections[i].weight == g.connections[i].weight);
        }
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            CHECK(mutated.nodes[i].bias == g.nodes[i].bias);
        }
    }
    SECTION("node add splits one connection") {
        cfg.connection_add_prob = 0.0;
        cfg.node_add_prob = 1.0;
        cfg.weight_mutate_rate = 0.0;
        cfg.bias_mutate_rate = 0.0;
        InnovationRegistry registry(100, 50);
        // Single-connection genome: 1 input, 1 output... outputs need >= 1;
        // use a 1x1 direct net.
        std::mt19937_64 rng_s(23);
        Genome g = new_minimal(1, 1, 0, InitSpec::xavier(1, 0, 1), rng_s);
        REQUIRE(g.connections.size() == 1);
        const double old_weight = g.connections[0].weight;
        const Genome mutated = mutate(g, cfg, registry, rng);
        CHECK(mutated.nodes.size() == g.nodes.size() + 1);
        CHECK(mutated.connections.size() == 3);
        int enabled = 0;
        for (const ConnectionGene& c : mutated.connections) {
            if (c.enabled) ++enabled;
        }
        CHECK(enabled == 2);
        CHECK(mutated.connections[0].enabled == false);  // the split original
        bool saw_unit = false;
        bool saw_inherited = false;
        for (const ConnectionGene& c : mutated.connections) {
            if (!c.enabled) continue;
            if (c.weight == 1.0) saw_unit = true;
            if (c.weight == old_weight) saw_inherited = true;
        }
        CHECK(saw_unit);
        CHECK(saw_inherited);
    }
    SECTION("1000 mutations never create a cycle") {
        InnovationRegistry registry(1000, 100);
        Genome g = minimal_genome(rng);
        for (int i = 0; i < 1000; ++i) {
            if (i % 40 == 0) {
                registry.begin_generation();
                g = minimal_genome(rng);  // keep genomes from growing unbounded
            }
            g = mutate(g, cfg, registry, rng);
            CHECK_NOTHROW(assign_layers(g));
        }
    }
    SECTION("structural probabilities hold in expectation (chi-square)") {
        cfg.connection_add_prob = 0.8;
        cfg.node_add_prob = 0.5;
        cfg.weight_mutate_rate = 0.0;
        cfg.bias_mutate_rate = 0.0;
        InnovationRegistry registry(1000, 100);
        int connection_adds = 0;
        int node_adds = 0;
        const int trials = 10000;
        for (int i = 0; i < trials; ++i) {
            registry.begin_generation();
            const Genome g = minimal_genome(rng);  // plenty of legal pairs and splits
            const Genome mutated = mutate(g, cfg, registry, rng);
            const auto d_nodes = mutated.nodes.size() - g.nodes.size();
            const auto d_conns = mutated.connections.size() - g.connections.size();
            if (d_nodes == 1) ++node_adds;
            connection_adds += static_cast<int>(d_conns) - 2 * static_cast<int>(d_nodes);
        }
        // Chi-square against the configured Bernoulli rates, df=1; reject
        // only below p = 0.01 (critical value 6.635).
        auto chi_square = [trials](int hits, double p) {
            const double expected_hits = trials * p;
            const double expected_miss = trials * (1.0 - p);
            const double miss = trials - hits;
            return (hits - expected_hits) * (hits - expected_hits) / expected_hits +
                   (miss - expected_miss) * (miss - expected_miss) / expected_miss;
        };
        CHECK(chi_square(connection_adds, cfg.connection_add_prob) < 6.635);
        CHECK(chi_square(node_adds, cfg.node_add_prob) < 6.635);
    }
    SECTION("same structural change in one generation shares innovations") {
        InnovationRegistry registry(1000, 100);
        registry.begin_generation();
        const std::uint32_t first = registry.connection_innovation(3, 9);
        const std::uint32_t second = registry.connection_innovation(3, 9);
        CHECK(first == second);
        const auto split_a = registry.split(42);
        const auto split_b = registry.split(42);
        CHECK(split_a.node_id == split_b.node_id);
        CHECK(split_a.innovation_in == split_b.innovation_in);
        registry.begin_generation();
        CHECK(registry.connection_innovation(3, 9) != first);
    }
}

TEST_CASE("evolve_generation") {
    std::mt19937_64 rng(29);
    EvolutionConfig cfg = small_config();
    LabeledBatch batch = two_class_batch(cfg.batch_size, 0.5, rng);

    SECTION("zero rates clone the selected genomes") {
        EvolutionConfig frozen = cfg;
        frozen.connection_add_prob = 0.0;
        frozen.node_add_prob = 0.0;
        frozen.weight_mutate_rate = 0.0;
        frozen.bias_mutate_rate = 0.0;
        frozen.crossover_rate = 0.0;
        Population pop = initial_population(2, 2, frozen, rng);
        evaluate_population(pop, batch);
        std::map<std::vector<double>, int> parent_weightsets;
        for (const Genome* g : pop.all_members()) {
            std::vector<double> w;
            for (const ConnectionGene& c : g->connections) w.push_back(c.weight);
            parent_weightsets[w] = 1;
        }
        const Population next = evolve_generation(pop, batch, frozen, rng);
        CHECK(next.total_members() == frozen.population_size);
        for (const Genome* g : next.all_members()) {
            std::vector<double> w;
            for (const ConnectionGene& c : g->connections) w.push_back(c.weight);
            CHECK(parent_weightsets.count(w) == 1);
        }
    }
    SECTION("fitness threshold reached raises the completion flag") {
        EvolutionConfig lenient = cfg;
        lenient.fitness_threshold = 10.0;  // any loss qualifies
        Population pop = initial_population(2, 2, lenient, rng);
        const Population next = evolve_generation(pop, batch, lenient, rng);
        CHECK(next.fitness_goal_reached);
    }
    SECTION("species partition stays valid and elitism preserves the best") {
        Population pop = initial_population(2, 2, cfg, rng);
        evaluate_population(pop, batch);
        double previous_best = pop.best_genome().fitness;
        for (int gen = 0; gen < 6; ++gen) {
            pop = evolve_generation(pop, batch, cfg, rng);
            CHECK(pop.total_members() == cfg.population_size);
            std::set<std::uint32_t> seen_ids;
            for (const Species& s : pop.species) {
                CHECK(!s.members.empty());
                for (const Genome& g : s.members) CHECK(seen_ids.insert(g.id).second);
            }
            const double best = pop.best_genome().fitness;
            CHECK(best <= previous_best + 1e-12);
            previous_best = best;
        }
    }
    SECTION("mean fitness trends down on easy data across seeds") {
        int improved = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            std::mt19937_64 run_rng(1000 + seed);
            LabeledBatch easy = two_class_batch(cfg.batch_size, 0.6, run_rng);
            Population pop = initial_population(2, 2, cfg, run_rng);
            evaluate_population(pop, easy);
            auto mean_loss = [](const Population& p) {
                double sum = 0.0;
                int count = 0;
                for (const Species& s : p.species) {
                    for (const Genome& g : s.members) {
                        sum += g.fitness;
                        ++count;
                    }
                }
                return sum / count;
            };
            const double before = mean_loss(pop);
            for (int gen = 0; gen < 10; ++gen) pop = evolve_generation(pop, easy, cfg, run_rng);
            if (mean_loss(pop) < before) ++improved;
        }
        CHECK(improved >= 8);
    }
}
