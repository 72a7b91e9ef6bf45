#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "infoneat/entropy.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/evolution.hpp"
#include "infoneat/genome.hpp"

namespace infoneat {

// Per-node Gram matrices of a genome's layers on the reference batch.
// Hidden layers appear in ascending layer order; a genome without hidden
// nodes contributes its output activations as the single comparable layer.
struct LayerGrams {
    std::vector<std::vector<GramMatrix>> layers;
    bool from_output_fallback = false;

    int depth() const { return static_cast<int>(layers.size()); }

    // Layers are compared from the output side: offset 1 is the last layer.
    const std::vector<GramMatrix>& from_output(int offset) const {
        return layers[layers.size() - static_cast<std::size_t>(offset)];
    }
};

inline LayerGrams collect_layer_grams(const NetworkEvaluator& eval, const Eigen::MatrixXd& batch,
                                      const KernelSpec& kernel = KernelSpec::gaussian_auto()) {
    const NetworkEvaluator::Collected c = eval.forward_collect(batch);
    LayerGrams out;
    if (c.hidden_groups.empty()) {
        out.layers.push_back(activation_gram(c.probabilities, kernel));
        out.from_output_fallback = true;
    } else {
        out.layers.reserve(c.hidden_groups.size());
        for (const Eigen::MatrixXd& group : c.hidden_groups) {
            out.layers.push_back(activation_gram(group, kernel));
        }
    }
    return out;
}

// State carried between generations for the stopping test.
struct GenerationSnapshot {
    std::uint32_t generation = 0;
    Genome best_genome;
    double best_loss = std::numeric_limits<double>::infinity();
    LayerGrams grams;
};

inline GenerationSnapshot make_snapshot(std::uint32_t generation, const Genome& best,
                                        const Eigen::MatrixXd& batch,
                                        const KernelSpec& kernel = KernelSpec::gaussian_auto()) {
    GenerationSnapshot snap;
    snap.generation = generation;
    snap.best_genome = best;
    snap.best_loss = best.fitness;
    snap.grams = collect_layer_grams(NetworkEvaluator(best), batch, kernel);
    return snap;
}

enum class StopReason : std::uint8_t {
    none = 0,
    loss_degraded = 1,
    cmi_increased = 2,
    max_generations = 3,
    fitness_threshold = 4,
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::loss_degraded: return "loss_degraded";
        case StopReason::cmi_increased: return "cmi_increased";
        case StopReason::max_generations: return "max_generations";
        case StopReason::fitness_threshold: return "fitness_threshold";
        default: return "none";
    }
}

struct StopDecision {
    bool stopped = false;
    StopReason reason = StopReason::none;
    std::optional<Genome> final_genome;
    double cmi_current = std::numeric_limits<double>::quiet_NaN();  // CMI_t, for reporting
};

// Best-genome choice within a generation. Loss decides outright when a
// unique minimizer exists; exact ties fall through to layer-wise CMI against
// each candidate's previous-generation counterpart, compared from the output
// side inward. A tie that survives every layer goes to the lowest genome id.
inline const Genome& select_best_genome(std::span<const Genome* const> candidates,
                                        std::span<const Genome* const> parents,
                                        const GramMatrix& labels, const Eigen::MatrixXd& batch,
                                        const KernelSpec& kernel = KernelSpec::gaussian_auto(),
                                        double alpha = 1.01) {
    if (candidates.empty()) throw InputError("select_best_genome: no candidates");
    if (!parents.empty() && parents.size() != candidates.size()) {
        throw InputError("select_best_genome: parent list length mismatch");
    }

    double min_loss = std::numeric_limits<double>::infinity();
    for (const Genome* g : candidates) min_loss = std::min(min_loss, g->fitness);
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i]->fitness == min_loss) tied.push_back(i);
    }
    if (tied.size() == 1) return *candidates[tied[0]];

    auto by_lowest_id = [&]() -> const Genome& {
        const Genome* best = candidates[tied[0]];
        for (std::size_t i : tied) {
            if (candidates[i]->id < best->id) best = candidates[i];
        }
        return *best;
    };
    if (parents.empty()) return by_lowest_id();

    std::vector<LayerGrams> cand_grams(tied.size());
    std::vector<LayerGrams> parent_grams(tied.size());
    int comparable_depth = std::numeric_limits<int>::max();
    for (std::size_t k = 0; k < tied.size(); ++k) {
        cand_grams[k] = collect_layer_grams(NetworkEvaluator(*candidates[tied[k]]), batch, kernel);
        parent_grams[k] = collect_layer_grams(NetworkEvaluator(*parents[tied[k]]), batch, kernel);
        comparable_depth =
            std::min({comparable_depth, cand_grams[k].depth(), parent_grams[k].depth()});
    }

    for (int offset = 1; offset <= comparable_depth; ++offset) {
        std::vector<double> cmis(tied.size());
        for (std::size_t k = 0; k < tied.size(); ++k) {
            cmis[k] = cmi(std::span<const GramMatrix>(cand_grams[k].from_output(offset)), labels,
                          std::span<const GramMatrix>(parent_grams[k].from_output(offset)), alpha);
        }
        double best_cmi = std::numeric_limits<double>::infinity();
        for (double v : cmis) best_cmi = std::min(best_cmi, v);
        std::vector<std::size_t> still_tied;
        for (std::size_t k = 0; k < tied.size(); ++k) {
            if (cmis[k] == best_cmi) still_tied.push_back(tied[k]);
        }
        if (still_tied.size() == 1) return *candidates[still_tied[0]];
        tied = std::move(still_tied);
    }
    return by_lowest_id();
}

// Stopping rule over the offspring of the incumbent best's species: a single
// offspring with strictly worse loss, or with CMI above the incumbent's
// generation-over-generation CMI, ends the run and delivers the incumbent.
inline StopDecision should_stop(const GenerationSnapshot& current,
                                const GenerationSnapshot& previous,
                                std::span<const Genome* const> offspring, const GramMatrix& labels,
                                const Eigen::MatrixXd& batch,
                                const KernelSpec& kernel = KernelSpec::gaussian_auto(),
                                double alpha = 1.01) {
    if (current.generation < 2 || previous.generation + 1 != current.generation) {
        throw InputError("should_stop: requires consecutive snapshots with t >= 2");
    }
    StopDecision decision;
    decision.cmi_current =
        cmi(std::span<const GramMatrix>(current.grams.from_output(1)), labels,
            std::span<const GramMatrix>(previous.grams.from_output(1)), alpha);

    for (const Genome* child : offspring) {
        if (!child->has_fitness()) throw InputError("should_stop: offspring without fitness");
        if (current.best_loss < child->fitness) {
            decision.stopped = true;
            decision.reason = StopReason::loss_degraded;
            decision.final_genome = current.best_genome;
            return decision;
        }
        const LayerGrams child_grams =
            collect_layer_grams(NetworkEvaluator(*child), batch, kernel);
        const double cmi_next =
            cmi(std::span<const GramMatrix>(child_grams.from_output(1)), labels,
                std::span<const GramMatrix>(current.grams.from_output(1)), alpha);
        if (decision.cmi_current < cmi_next) {
            decision.stopped = true;
            decision.reason = StopReason::cmi_increased;
            decision.final_genome = current.best_genome;
            return decision;
        }
    }
    return decision;
}

// Per-generation (loss, CMI) series of a training run.
struct TraceRow {
    std::uint32_t generation = 0;
    double best_loss = 0.0;
    double last_layer_cmi = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string training_trace_csv(std::span<const TraceRow> rows) {
    std::ostringstream out;
    out << "generation,best_loss,last_layer_cmi\n";
    for (const TraceRow& r : rows) {
        out << r.generation << ',' << detail::format_g17(r.best_loss) << ','
            << detail::format_g17(r.last_layer_cmi) << '\n';
    }
    return out.str();
}

inline std::vector<TraceRow> parse_training_trace_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("training trace: missing header");
    if (line != "generation,best_loss,last_layer_cmi") {
        throw FormatError("training trace: unexpected header '" + line + "'");
    }
    std::vector<TraceRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TraceRow r;
        std::istringstream fields(line);
        std::string gen, loss, cmi_text;
        if (!std::getline(fields, gen, ',') || !std::getline(fields, loss, ',') ||
            !std::getline(fields, cmi_text)) {
            throw FormatError("training trace: malformed row at line " + std::to_string(lineno));
        }
        r.generation = static_cast<std::uint32_t>(std::stoul(gen));
        r.best_loss = std::stod(loss);
        r.last_layer_cmi = std::stod(cmi_text);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace infoneat
