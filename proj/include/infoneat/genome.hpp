#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "infoneat/errors.hpp"

namespace infoneat {

enum class NodeKind : std::uint8_t { input = 0, hidden = 1, output = 2 };
enum class ActivationKind : std::uint8_t { leaky_relu = 0, softmax_member = 1 };

constexpr double leaky_relu_slope = 0.01;

inline double leaky_relu(double x) {
    return x > 0.0 ? x : leaky_relu_slope * x;
}

struct NodeGene {
    std::uint32_t id = 0;
    NodeKind kind = NodeKind::hidden;
    double bias = 0.0;
    ActivationKind activation = ActivationKind::leaky_relu;
};

struct ConnectionGene {
    std::uint32_t innovation = 0;  // historical marking
    std::uint32_t from_node = 0;
    std::uint32_t to_node = 0;
    double weight = 0.0;
    bool enabled = true;
};

// A network encoded as node genes plus innovation-numbered connection genes.
// The enabled-connection digraph is acyclic; inputs and outputs are fixed by
// the problem. Fitness is the cross-entropy loss (lower is better).
struct Genome {
    std::uint32_t id = 0;
    std::uint32_t n_inputs = 0;
    std::uint32_t n_outputs = 0;
    std::vector<NodeGene> nodes;              // sorted by id
    std::vector<ConnectionGene> connections;  // sorted by innovation
    double fitness = std::numeric_limits<double>::quiet_NaN();
    std::uint32_t generation_born = 1;

    bool has_fitness() const { return !std::isnan(fitness); }

    const NodeGene* find_node(std::uint32_t node_id) const {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), node_id,
                                   [](const NodeGene& g, std::uint32_t v) { return g.id < v; });
        return (it != nodes.end() && it->id == node_id) ? &*it : nullptr;
    }

    bool has_connection(std::uint32_t from, std::uint32_t to) const {
        return std::any_of(connections.begin(), connections.end(), [&](const ConnectionGene& c) {
            return c.from_node == from && c.to_node == to;
        });
    }

    void sort_genes() {
        std::sort(nodes.begin(), nodes.end(),
                  [](const NodeGene& a, const NodeGene& b) { return a.id < b.id; });
        std::sort(connections.begin(), connections.end(),
                  [](const ConnectionGene& a, const ConnectionGene& b) {
                      return a.innovation < b.innovation;
                  });
    }
};

// Topological grading: inputs sit at layer 0 and every enabled connection
// increases the layer index, so skip connections across layers are legal.
struct LayerAssignment {
    std::map<std::uint32_t, int> layer_of;
    int depth = 0;  // max hidden layer index; 0 when there are no hidden nodes
    std::vector<std::vector<std::uint32_t>> hidden_layers;  // node ids per layer, ascending
    std::vector<std::uint32_t> output_ids;                  // sorted by id
};

// layer(v) = length of the longest enabled path from any source node.
inline LayerAssignment assign_layers(const Genome& genome) {
    LayerAssignment out;
    std::map<std::uint32_t, std::vector<std::uint32_t>> incoming;
    std::map<std::uint32_t, int> pending;  // remaining unresolved in-edges
    for (const NodeGene& n : genome.nodes) pending[n.id] = 0;
    for (const ConnectionGene& c : genome.connections) {
        if (!c.enabled) continue;
        if (!pending.count(c.from_node) || !pending.count(c.to_node)) {
            throw StructureError("connection references a missing node");
        }
        incoming[c.to_node].push_back(c.from_node);
        ++pending[c.to_node];
    }

    std::vector<std::uint32_t> ready;
    for (const auto& [id, deps] : pending) {
        if (deps == 0) ready.push_back(id);
    }
    std::map<std::uint32_t, std::vector<std::uint32_t>> outgoing;
    for (const ConnectionGene& c : genome.connections) {
        if (c.enabled) outgoing[c.from_node].push_back(c.to_node);
    }

    std::size_t resolved = 0;
    for (std::size_t head = 0; head < ready.size(); ++head) {
        const std::uint32_t id = ready[head];
        ++resolved;
        int layer = 0;
        for (std::uint32_t src : incoming[id]) {
            layer = std::max(layer, out.layer_of.at(src) + 1);
        }
        out.layer_of[id] = layer;
        for (std::uint32_t next : outgoing[id]) {
            if (--pending[next] == 0) ready.push_back(next);
        }
    }
    if (resolved != genome.nodes.size()) {
        throw StructureError("cycle detected in enabled connections");
    }

    std::map<int, std::vector<std::uint32_t>> by_layer;
    for (const NodeGene& n : genome.nodes) {
        if (n.kind == NodeKind::hidden) {
            const int l = out.layer_of.at(n.id);
            by_layer[l].push_back(n.id);
            out.depth = std::max(out.depth, l);
        } else if (n.kind == NodeKind::output) {
            out.output_ids.push_back(n.id);
        }
    }
    for (auto& [layer, ids] : by_layer) {
        std::sort(ids.begin(), ids.end());
        out.hidden_layers.push_back(std::move(ids));
    }
    std::sort(out.output_ids.begin(), out.output_ids.end());
    return out;
}

// Compiled evaluation schedule for one genome: a cached topological order
// plus per-node fan-in lists. Construction does all structural work once, so
// repeated forward passes over a batch stay cheap. Immutable after build;
// safe to share across threads.
class NetworkEvaluator {
public:
    explicit NetworkEvaluator(const Genome& genome) : layers_(assign_layers(genome)) {
        n_inputs_ = static_cast<int>(genome.n_inputs);
        n_outputs_ = static_cast<int>(genome.n_outputs);

        slot_of_.clear();
        for (const NodeGene& n : genome.nodes) {
            slot_of_.emplace(n.id, static_cast<int>(slot_of_.size()));
        }
        nodes_.resize(genome.nodes.size());
        for (const NodeGene& n : genome.nodes) {
            NodeStep& step = nodes_[static_cast<std::size_t>(slot_of_.at(n.id))];
            step.id = n.id;
            step.kind = n.kind;
            step.bias = n.bias;
            step.layer = layers_.layer_of.at(n.id);
        }
        for (const ConnectionGene& c : genome.connections) {
            if (!c.enabled) continue;
            NodeStep& to = nodes_[static_cast<std::size_t>(slot_of_.at(c.to_node))];
            to.fan_in.emplace_back(slot_of_.at(c.from_node), c.weight);
        }

        // Evaluate in (layer, id) order; inputs are seeded directly.
        for (const NodeStep& step : nodes_) {
            if (step.kind != NodeKind::input) order_.push_back(slot_of_.at(step.id));
        }
        std::sort(order_.begin(), order_.end(), [this](int a, int b) {
            const NodeStep& na = nodes_[static_cast<std::size_t>(a)];
            const NodeStep& nb = nodes_[static_cast<std::size_t>(b)];
            return na.layer != nb.layer ? na.layer < nb.layer : na.id < nb.id;
        });
        for (std::uint32_t id : layers_.output_ids) output_slots_.push_back(slot_of_.at(id));
        for (const NodeGene& n : genome.nodes) {
            if (n.kind == NodeKind::input) input_slots_.push_back(slot_of_.at(n.id));
        }
    }

    const LayerAssignment& layers() const { return layers_; }
    int n_inputs() const { return n_inputs_; }
    int n_outputs() const { return n_outputs_; }

    // Probabilities for one input row; writes every node activation into
    // `values` (sized to the node count) so callers can group them by layer.
    void eval_row(std::span<const double> input, std::vector<double>& values) const {
        if (static_cast<int>(input.size()) != n_inputs_) {
            throw InputError("forward: input width " + std::to_string(input.size()) +
                             " != " + std::to_string(n_inputs_));
        }
        for (double v : input) {
            if (std::isnan(v)) throw InputError("forward: NaN in input");
        }
        values.assign(nodes_.size(), 0.0);
        for (std::size_t i = 0; i < input_slots_.size(); ++i) {
            values[static_cast<std::size_t>(input_slots_[i])] = input[i];
        }
        for (int slot : order_) {
            const NodeStep& step = nodes_[static_cast<std::size_t>(slot)];
            double sum = step.bias;
            for (const auto& [src, w] : step.fan_in) {
                sum += w * values[static_cast<std::size_t>(src)];
            }
            values[static_cast<std::size_t>(slot)] =
                (step.kind == NodeKind::hidden) ? leaky_relu(sum) : sum;
        }
        // Numerically stable softmax over the output pre-activations.
        double zmax = -std::numeric_limits<double>::infinity();
        for (int slot : output_slots_) zmax = std::max(zmax, values[static_cast<std::size_t>(slot)]);
        double denom = 0.0;
        for (int slot : output_slots_) {
            denom += std::exp(values[static_cast<std::size_t>(slot)] - zmax);
        }
        for (int slot : output_slots_) {
            values[static_cast<std::size_t>(slot)] =
                std::exp(values[static_cast<std::size_t>(slot)] - zmax) / denom;
        }
    }

    std::vector<double> forward(std::span<const double> input) const {
        std::vector<double> values;
        eval_row(input, values);
        std::vector<double> probs;
        probs.reserve(output_slots_.size());
        for (int slot : output_slots_) probs.push_back(values[static_cast<std::size_t>(slot)]);
        return probs;
    }

    struct Collected {
        // One activation matrix per hidden layer (ascending layer index,
        // columns in node-id order), then the output probabilities.
        std::vector<Eigen::MatrixXd> hidden_groups;
        Eigen::MatrixXd probabilities;
    };

    Collected forward_collect(const Eigen::MatrixXd& batch) const {
        const int n = static_cast<int>(batch.rows());
        Collected out;
        out.hidden_groups.reserve(layers_.hidden_layers.size());
        for (const auto& ids : layers_.hidden_layers) {
            out.hidden_groups.emplace_back(n, static_cast<int>(ids.size()));
        }
        out.probabilities.resize(n, n_outputs_);

        std::vector<double> row(static_cast<std::size_t>(batch.cols()));
        std::vector<double> values;
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < batch.cols(); ++c) row[static_cast<std::size_t>(c)] = batch(r, c);
            eval_row(row, values);
            for (std::size_t g = 0; g < layers_.hidden_layers.size(); ++g) {
                const auto& ids = layers_.hidden_layers[g];
                for (std::size_t k = 0; k < ids.size(); ++k) {
                    out.hidden_groups[g](r, static_cast<int>(k)) =
                        values[static_cast<std::size_t>(slot_of_.at(ids[k]))];
                }
            }
            for (std::size_t k = 0; k < output_slots_.size(); ++k) {
                out.probabilities(r, static_cast<int>(k)) =
                    values[static_cast<std::size_t>(output_slots_[k])];
            }
        }
        return out;
    }

private:
    struct NodeStep {
        std::uint32_t id = 0;
        NodeKind kind = NodeKind::hidden;
        double bias = 0.0;
        int layer = 0;
        std::vector<std::pair<int, double>> fan_in;  // (source slot, weight)
    };

    LayerAssignment layers_;
    std::map<std::uint32_t, int> slot_of_;
    std::vector<NodeStep> nodes_;
    std::vector<int> order_;
    std::vector<int> input_slots_;
    std::vector<int> output_slots_;
    int n_inputs_ = 0;
    int n_outputs_ = 0;
};

inline std::vector<double> forward(const Genome& genome, std::span<const double> input) {
    return NetworkEvaluator(genome).forward(input);
}

// Xavier-style initialization: per-layer standard deviations derived from the
// initial dense one-hidden-layer shape, samples clamped at 3 sigma.
struct InitSpec {
    double sigma_input_hidden = 0.1;
    double sigma_hidden_output = 0.1;
    double clamp_multiplier = 3.0;

    static InitSpec xavier(int n_inputs, int n_hidden, int n_outputs) {
        InitSpec spec;
        if (n_hidden > 0) {
            spec.sigma_input_hidden = std::sqrt(2.0 / (n_inputs + n_hidden));
            spec.sigma_hidden_output = std::sqrt(2.0 / (n_hidden + n_outputs));
        } else {
            spec.sigma_input_hidden = std::sqrt(2.0 / (n_inputs + n_outputs));
            spec.sigma_hidden_output = spec.sigma_input_hidden;
        }
        return spec;
    }

    double max_sigma() const { return std::max(sigma_input_hidden, sigma_hidden_output); }
};

namespace detail {

inline double clamped_normal(std::mt19937_64& rng, double sigma, double clamp_multiplier) {
    std::normal_distribution<double> dist(0.0, sigma);
    const double bound = clamp_multiplier * sigma;
    return std::clamp(dist(rng), -bound, bound);
}

}  // namespace detail

// Minimal starting topology: inputs, outputs, and one dense hidden layer of
// n_hidden nodes (direct input->output connections when n_hidden is 0).
// Deterministic gene numbering, so every genome of an initial population
// shares the same innovations.
inline Genome new_minimal(int n_inputs, int n_outputs, int n_hidden, const InitSpec& init,
                          std::mt19937_64& rng) {
    if (n_inputs < 1 || n_outputs < 1 || n_hidden < 0) {
        throw InputError("new_minimal: need n_inputs >= 1, n_outputs >= 1, n_hidden >= 0");
    }
    Genome g;
    g.n_inputs = static_cast<std::uint32_t>(n_inputs);
    g.n_outputs = static_cast<std::uint32_t>(n_outputs);

    std::uint32_t next_id = 0;
    for (int i = 0; i < n_inputs; ++i) {
        g.nodes.push_back({next_id++, NodeKind::input, 0.0, ActivationKind::leaky_relu});
    }
    std::vector<std::uint32_t> output_ids;
    for (int i = 0; i < n_outputs; ++i) {
        const double bias = detail::clamped_normal(rng, init.sigma_hidden_output, init.clamp_multiplier);
        output_ids.push_back(next_id);
        g.nodes.push_back({next_id++, NodeKind::output, bias, ActivationKind::softmax_member});
    }
    std::vector<std::uint32_t> hidden_ids;
    for (int i = 0; i < n_hidden; ++i) {
        const double bias = detail::clamped_normal(rng, init.sigma_input_hidden, init.clamp_multiplier);
        hidden_ids.push_back(next_id);
        g.nodes.push_back({next_id++, NodeKind::hidden, bias, ActivationKind::leaky_relu});
    }

    std::uint32_t innovation = 0;
    if (n_hidden > 0) {
        for (std::uint32_t in = 0; in < static_cast<std::uint32_t>(n_inputs); ++in) {
            for (std::uint32_t h : hidden_ids) {
                const double w =
                    detail::clamped_normal(rng, init.sigma_input_hidden, init.clamp_multiplier);
                g.connections.push_back({innovation++, in, h, w, true});
            }
        }
        for (std::uint32_t h : hidden_ids) {
            for (std::uint32_t o : output_ids) {
                const double w =
                    detail::clamped_normal(rng, init.sigma_hidden_output, init.clamp_multiplier);
                g.connections.push_back({innovation++, h, o, w, true});
            }
        }
    } else {
        for (std::uint32_t in = 0; in < static_cast<std::uint32_t>(n_inputs); ++in) {
            for (std::uint32_t o : output_ids) {
                const double w =
                    detail::clamped_normal(rng, init.sigma_hidden_output, init.clamp_multiplier);
                g.connections.push_back({innovation++, in, o, w, true});
            }
        }
    }
    return g;
}

// Structural audit: endpoint existence, interface width, acyclicity.
inline void validate_genome(const Genome& genome) {
    std::uint32_t inputs = 0;
    std::uint32_t outputs = 0;
    for (const NodeGene& n : genome.nodes) {
        if (n.kind == NodeKind::input) ++inputs;
        if (n.kind == NodeKind::output) ++outputs;
    }
    if (inputs != genome.n_inputs || outputs != genome.n_outputs) {
        throw StructureError("genome interface node counts do not match declared widths");
    }
    for (const ConnectionGene& c : genome.connections) {
        if (c.from_node == c.to_node) throw StructureError("self-connection");
        if (!genome.find_node(c.from_node) || !genome.find_node(c.to_node)) {
            throw StructureError("connection endpoint references a missing node");
        }
    }
    assign_layers(genome);  // throws on cycles
}

// --- serialization -----------------------------------------------------
//
// Versioned little-endian record; doubles are stored as raw IEEE-754 bits so
// a save/load round trip is bit-exact.

namespace detail {

constexpr char genome_magic[8] = {'I', 'N', 'G', 'E', 'N', 'O', 'M', '1'};
constexpr std::uint32_t genome_version = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes, bytes + sizeof(T));
    }
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
    if (!out) throw IoError("binary write failed");
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char bytes[sizeof(T)];
    in.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!in) {
        throw FormatError("record truncated", static_cast<std::size_t>(std::max<std::streamoff>(
                                                  0, static_cast<std::streamoff>(in.gcount()))));
    }
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(bytes, bytes + sizeof(T));
    }
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

inline void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_le(out, bits);
}

inline double read_f64(std::istream& in) {
    const std::uint64_t bits = read_le<std::uint64_t>(in);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace detail

inline void write_genome(std::ostream& out, const Genome& g) {
    out.write(detail::genome_magic, sizeof(detail::genome_magic));
    detail::write_le(out, detail::genome_version);
    detail::write_le(out, g.id);
    detail::write_le(out, g.n_inputs);
    detail::write_le(out, g.n_outputs);
    detail::write_le(out, g.generation_born);
    detail::write_f64(out, g.fitness);
    detail::write_le(out, static_cast<std::uint32_t>(g.nodes.size()));
    for (const NodeGene& n : g.nodes) {
        detail::write_le(out, n.id);
        detail::write_le(out, static_cast<std::uint8_t>(n.kind));
        detail::write_le(out, static_cast<std::uint8_t>(n.activation));
        detail::write_f64(out, n.bias);
    }
    detail::write_le(out, static_cast<std::uint32_t>(g.connections.size()));
    for (const ConnectionGene& c : g.connections) {
        detail::write_le(out, c.innovation);
        detail::write_le(out, c.from_node);
        detail::write_le(out, c.to_node);
        detail::write_f64(out, c.weight);
        detail::write_le(out, static_cast<std::uint8_t>(c.enabled ? 1 : 0));
    }
}

inline Genome read_genome(std::istream& in) {
    char magic[sizeof(detail::genome_magic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), detail::genome_magic)) {
        throw FormatError("bad genome magic", 0);
    }
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != detail::genome_version) {
        throw FormatError("unsupported genome record version " + std::to_string(version), 8);
    }
    Genome g;
    g.id = detail::read_le<std::uint32_t>(in);
    g.n_inputs = detail::read_le<std::uint32_t>(in);
    g.n_outputs = detail::read_le<std::uint32_t>(in);
    g.generation_born = detail::read_le<std::uint32_t>(in);
    g.fitness = detail::read_f64(in);
    const auto n_nodes = detail::read_le<std::uint32_t>(in);
    g.nodes.reserve(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        NodeGene n;
        n.id = detail::read_le<std::uint32_t>(in);
        n.kind = static_cast<NodeKind>(detail::read_le<std::uint8_t>(in));
        n.activation = static_cast<ActivationKind>(detail::read_le<std::uint8_t>(in));
        n.bias = detail::read_f64(in);
        g.nodes.push_back(n);
    }
    const auto n_conns = detail::read_le<std::uint32_t>(in);
    g.connections.reserve(n_conns);
    for (std::uint32_t i = 0; i < n_conns; ++i) {
        ConnectionGene c;
        c.innovation = detail::read_le<std::uint32_t>(in);
        c.from_node = detail::read_le<std::uint32_t>(in);
        c.to_node = detail::read_le<std::uint32_t>(in);
        c.weight = detail::read_f64(in);
        c.enabled = detail::read_le<std::uint8_t>(in) != 0;
        g.connections.push_back(c);
    }
    validate_genome(g);
    return g;
}

inline void save_genome(const std::string& path, const Genome& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_genome(out, g);
}

inline Genome load_genome(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_genome(in);
}

// Trainable-parameter count: enabled connection weights plus hidden/output
// biases; reported by run summaries.
inline std::size_t trainable_parameters(const Genome& g) {
    std::size_t count = 0;
    for (const ConnectionGene& c : g.connections) {
        if (c.enabled) ++count;
    }
    for (const NodeGene& n : g.nodes) {
        if (n.kind != NodeKind::input) ++count;
    }
    return count;
}

}  // namespace infoneat
