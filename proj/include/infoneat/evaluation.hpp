#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "infoneat/data.hpp"
#include "infoneat/ensemble.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/rng.hpp"
#include "infoneat/sbox.hpp"

namespace infoneat {

// Maps a (plaintext byte, key hypothesis) pair to the class whose predicted
// probability a trace contributes to that hypothesis. The hypothesis space
// is the substitution-table domain (16 or 256 values).
struct LeakageModelSpec {
    enum class Kind { sbox_id, sbox_hd, synthetic_id };

    Kind kind = Kind::sbox_id;
    std::vector<std::uint8_t> sbox;  // forward substitution table

    static LeakageModelSpec aes_id() { return {Kind::sbox_id, default_sbox(256)}; }
    static LeakageModelSpec synthetic(std::vector<std::uint8_t> table) {
        validate_permutation(table);
        return {Kind::synthetic_id, std::move(table)};
    }
    static LeakageModelSpec aes_hd() { return {Kind::sbox_hd, default_sbox(256)}; }

    int n_hypotheses() const { return static_cast<int>(sbox.size()); }

    int n_classes() const {
        if (kind == Kind::sbox_hd) return hamming_weight_max(static_cast<int>(sbox.size())) + 1;
        return static_cast<int>(sbox.size());
    }

    int class_of(int plaintext, int key) const {
        const int idx = plaintext ^ key;
        if (idx < 0 || idx >= static_cast<int>(sbox.size())) {
            throw InputError("leakage model: plaintext/key outside table domain");
        }
        const int value = sbox[static_cast<std::size_t>(idx)];
        if (kind == Kind::sbox_hd) {
            // Distance between the substitution output and the state byte it
            // replaces; the table itself is configuration-supplied.
            return hamming_weight(static_cast<std::uint32_t>(value ^ idx));
        }
        return value;
    }
};

// Per-hypothesis maximum-likelihood scores, accumulated in the log domain so
// thousands of traces cannot underflow. Probabilities are floored at 1e-40;
// the monotone log keeps the induced ranking identical to the literal
// product of probabilities.
struct ScoreVector {
    std::vector<double> log_scores;

    int size() const { return static_cast<int>(log_scores.size()); }
};

inline ScoreVector key_scores(const Eigen::MatrixXd& predictions,
                              std::span<const std::uint8_t> plaintexts,
                              const LeakageModelSpec& model) {
    constexpr double eps = 1e-40;
    const int n = static_cast<int>(predictions.rows());
    if (n != static_cast<int>(plaintexts.size())) {
        throw InputError("key_scores: prediction/plaintext count mismatch");
    }
    if (static_cast<int>(predictions.cols()) != model.n_classes()) {
        throw InputError("key_scores: prediction width != leakage class count");
    }
    ScoreVector scores;
    scores.log_scores.assign(static_cast<std::size_t>(model.n_hypotheses()), 0.0);
    for (int i = 0; i < n; ++i) {
        const int p = plaintexts[static_cast<std::size_t>(i)];
        for (int k = 0; k < model.n_hypotheses(); ++k) {
            const double prob = std::clamp(predictions(i, model.class_of(p, k)), eps, 1.0);
            scores.log_scores[static_cast<std::size_t>(k)] += std::log(prob);
        }
    }
    return scores;
}

// Rank of the true key: the number of hypotheses scoring strictly higher.
// Ties do not raise the rank, so a strict maximum has rank 0.
inline int rank(const ScoreVector& scores, int true_key) {
    if (true_key < 0 || true_key >= scores.size()) throw InputError("rank: key outside score vector");
    const double reference = scores.log_scores[static_cast<std::size_t>(true_key)];
    int above = 0;
    for (double s : scores.log_scores) {
        if (s > reference) ++above;
    }
    return above;
}

// Average rank (guessing entropy) versus attack-trace count, summarized by
// mean, minimum, and median across independent repetitions.
struct RankCurve {
    std::vector<int> trace_counts;
    std::vector<double> avg_rank;
    std::vector<double> min_rank;
    std::vector<double> median_rank;
    int n_repetitions = 0;
};

// Ranks for nested prefixes of one trace ordering; scores accumulate trace by
// trace so the whole curve costs one pass.
inline std::vector<int> prefix_ranks(const Eigen::MatrixXd& predictions,
                                     std::span<const std::uint8_t> plaintexts,
                                     std::span<const int> order, std::span<const int> trace_counts,
                                     const LeakageModelSpec& model, int true_key) {
    constexpr double eps = 1e-40;
    std::vector<double> log_scores(static_cast<std::size_t>(model.n_hypotheses()), 0.0);
    std::vector<int> out;
    out.reserve(trace_counts.size());
    std::size_t next_count = 0;
    for (std::size_t used = 0; used < order.size() && next_count < trace_counts.size(); ++used) {
        const int row = order[used];
        const int p = plaintexts[static_cast<std::size_t>(row)];
        for (int k = 0; k < model.n_hypotheses(); ++k) {
            const double prob = std::clamp(predictions(static_cast<int>(row), model.class_of(p, k)),
                                           eps, 1.0);
            log_scores[static_cast<std::size_t>(k)] += std::log(prob);
        }
        while (next_count < trace_counts.size() &&
               static_cast<std::size_t>(trace_counts[next_count]) == used + 1) {
            ScoreVector sv{log_scores};
            out.push_back(rank(sv, true_key));
            ++next_count;
        }
    }
    if (out.size() != trace_counts.size()) {
        throw InputError("prefix_ranks: ordering shorter than the largest trace count");
    }
    return out;
}

inline RankCurve average_rank_from_predictions(const Eigen::MatrixXd& predictions,
                                               std::span<const std::uint8_t> plaintexts,
                                               int true_key, const LeakageModelSpec& model,
                                               std::vector<int> trace_counts, int repetitions,
                                               std::uint64_t seed) {
    if (trace_counts.empty()) throw InputError("average_rank: empty trace-count list");
    std::sort(trace_counts.begin(), trace_counts.end());
    if (trace_counts.front() < 1) throw InputError("average_rank: trace counts must be >= 1");
    const int n = static_cast<int>(predictions.rows());
    const int max_count = trace_counts.back();
    if (max_count > n) {
        throw InputError("average_rank: asked for " + std::to_string(max_count) +
                         " traces but the attack set holds " + std::to_string(n));
    }
    if (repetitions < 1) throw InputError("average_rank: repetitions must be >= 1");

    RankCurve curve;
    curve.trace_counts = trace_counts;
    curve.n_repetitions = repetitions;
    const std::size_t n_counts = trace_counts.size();
    std::vector<std::vector<int>> ranks(n_counts);  // per count, across repetitions

    std::vector<int> all_rows(static_cast<std::size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    for (int rep = 0; rep < repetitions; ++rep) {
        // Each repetition owns a sub-generator derived from (seed, rep), and
        // samples its traces without replacement.
        std::mt19937_64 rng = make_rng(derive_seed(seed, "attack-rep", static_cast<std::uint64_t>(rep)));
        std::vector<int> order = all_rows;
        for (int i = 0; i < max_count; ++i) {
            std::uniform_int_distribution<int> pick(i, n - 1);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
        }
        order.resize(static_cast<std::size_t>(max_count));
        const std::vector<int> reps =
            prefix_ranks(predictions, plaintexts, order, trace_counts, model, true_key);
        for (std::size_t c = 0; c < n_counts; ++c) ranks[c].push_back(reps[c]);
    }

    for (std::size_t c = 0; c < n_counts; ++c) {
        std::vector<int>& r = ranks[c];
        std::sort(r.begin(), r.end());
        const double sum = std::accumulate(r.begin(), r.end(), 0.0);
        curve.avg_rank.push_back(sum / static_cast<double>(r.size()));
        curve.min_rank.push_back(static_cast<double>(r.front()));
        const std::size_t mid = r.size() / 2;
        curve.median_rank.push_back(r.size() % 2 == 1
                                        ? static_cast<double>(r[mid])
                                        : 0.5 * (static_cast<double>(r[mid - 1]) +
                                                 static_cast<double>(r[mid])));
    }
    return curve;
}

// Predicts every attack trace once, then runs the repetition protocol on the
// cached prediction matrix.
inline RankCurve average_rank(const StackedModel& model, const TraceSet& attack_set,
                              const LeakageModelSpec& leakage, std::vector<int> trace_counts,
                              int repetitions, std::uint64_t seed) {
    if (!attack_set.fixed_key()) {
        throw InputError("average_rank: attack set must use a fixed key");
    }
    if (model.n_classes != leakage.n_classes()) {
        throw InputError("average_rank: model width != leakage class count");
    }
    const StackedPredictor predictor(model);
    Eigen::MatrixXd predictions(attack_set.n, model.n_classes);
    for (int i = 0; i < attack_set.n; ++i) {
        const std::vector<double> probs = predictor.predict(attack_set.row(i));
        for (int c = 0; c < model.n_classes; ++c) predictions(i, c) = probs[static_cast<std::size_t>(c)];
    }
    return average_rank_from_predictions(predictions, attack_set.plaintexts,
                                         attack_set.keys[0], leakage, std::move(trace_counts),
                                         repetitions, seed);
}

// Least trace count whose average rank reaches the threshold; T_GE0 demands
// exactly rank 0, the others use <=. An unreachable threshold stays empty
// ("failed to reach").
struct TgeRow {
    double threshold = 0.0;
    std::optional<int> traces;
};

inline std::vector<TgeRow> tge_metrics(const RankCurve& curve,
                                       std::span<const double> thresholds = {}) {
    static const double default_thresholds[] = {0.0, 1.0, 20.0, 50.0};
    if (curve.trace_counts.empty()) throw InputError("tge_metrics: empty curve");
    std::span<const double> ts =
        thresholds.empty() ? std::span<const double>(default_thresholds) : thresholds;
    std::vector<TgeRow> rows;
    for (double threshold : ts) {
        TgeRow row;
        row.threshold = threshold;
        for (std::size_t i = 0; i < curve.trace_counts.size(); ++i) {
            const bool reached = threshold == 0.0 ? curve.avg_rank[i] == 0.0
                                                  : curve.avg_rank[i] <= threshold;
            if (reached) {
                row.traces = curve.trace_counts[i];
                break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace infoneat
