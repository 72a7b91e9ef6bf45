#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "infoneat/criteria.hpp"
#include "infoneat/data.hpp"
#include "infoneat/entropy.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/evolution.hpp"
#include "infoneat/genome.hpp"
#include "infoneat/rng.hpp"

namespace infoneat {

struct EnsembleConfig {
    EvolutionConfig evolution;
    int holdout_per_class = 20;  // stacking slice split off before sub-model training
    double meta_l2 = 1e-4;
    int meta_max_iters = 500;
    double meta_tol = 1e-6;
};

// One target-vs-rest classifier: the evolved genome plus its training record.
struct SubModel {
    int class_id = 0;
    Genome genome;
    std::vector<TraceRow> trace;
    StopReason stop_reason = StopReason::none;
    std::uint32_t generations = 0;
    std::uint32_t species_count = 0;
    double final_loss = std::numeric_limits<double>::infinity();
};

struct MetaDataset {
    Eigen::MatrixXd features;  // n x m sub-model confidences, each in [0,1]
    std::vector<int> labels;
};

struct MetaWeights {
    Eigen::MatrixXd coef;       // classes x features
    Eigen::VectorXd intercept;  // classes
};

struct StackedModel {
    int n_classes = 0;
    int n_features = 0;  // trace feature width the sub-models expect
    std::vector<SubModel> sub_models;  // indexed by class id
    MetaWeights meta;
    std::string feature_spec = "own_class_confidence_v1";
    std::uint64_t config_fingerprint = 0;
    // Training-set min/max per feature; the only statistics ever applied to
    // attack traces. Empty when the caller scales externally.
    FeatureScaling scaling;
};

// Balanced target-vs-rest selection. Positives keep label 0, the sampled
// negatives label 1; both sides are truncated to the scarcer count so the
// split is exactly 50/50.
inline TraceSet build_ova_dataset(const TraceSet& set, int target_class, std::mt19937_64& rng) {
    auto by_class = rows_by_class(set);
    auto pos_it = by_class.find(target_class);
    if (pos_it == by_class.end() || pos_it->second.empty()) {
        throw InputError("build_ova_dataset: class " + std::to_string(target_class) +
                         " absent from the set");
    }
    std::vector<int> positives = pos_it->second;
    std::vector<int> negatives;
    for (const auto& [cls, rows] : by_class) {
        if (cls != target_class) negatives.insert(negatives.end(), rows.begin(), rows.end());
    }
    const std::size_t side = std::min(positives.size(), negatives.size());
    if (side == 0) throw InputError("build_ova_dataset: no negative traces available");
    std::shuffle(positives.begin(), positives.end(), rng);
    std::shuffle(negatives.begin(), negatives.end(), rng);
    positives.resize(side);
    negatives.resize(side);

    std::vector<int> rows = positives;
    rows.insert(rows.end(), negatives.begin(), negatives.end());
    std::shuffle(rows.begin(), rows.end(), rng);

    TraceSet ova = set.select(rows);
    for (int i = 0; i < ova.n; ++i) {
        const bool is_target = ova.labels[static_cast<std::size_t>(i)] == target_class;
        ova.labels[static_cast<std::size_t>(i)] = is_target ? 0 : 1;
    }
    ova.m = 2;
    return ova;
}

// The fixed reference batch of a sub-model run: balanced across the two OvA
// labels, used for every fitness and CMI evaluation of that run.
inline LabeledBatch make_reference_batch(const TraceSet& ova, int batch_size,
                                         std::mt19937_64& rng) {
    auto by_class = rows_by_class(ova);
    std::size_t per_side = static_cast<std::size_t>(std::max(1, batch_size / 2));
    for (const auto& [cls, rows] : by_class) per_side = std::min(per_side, rows.size());

    std::vector<int> chosen;
    for (auto& [cls, rows] : by_class) {
        std::vector<int> pool = rows;
        std::shuffle(pool.begin(), pool.end(), rng);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_side));
    }
    std::shuffle(chosen.begin(), chosen.end(), rng);

    LabeledBatch batch;
    batch.n_classes = ova.m;
    batch.inputs.resize(static_cast<int>(chosen.size()), ova.f);
    batch.labels.reserve(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const auto r = ova.row(chosen[i]);
        for (int c = 0; c < ova.f; ++c) {
            batch.inputs(static_cast<int>(i), c) = static_cast<double>(r[static_cast<std::size_t>(c)]);
        }
        batch.labels.push_back(ova.labels[static_cast<std::size_t>(chosen[i])]);
    }
    return batch;
}

namespace detail {

inline std::uint32_t species_id_of(const Population& pop, std::uint32_t genome_id) {
    for (const Species& s : pop.species) {
        for (const Genome& g : s.members) {
            if (g.id == genome_id) return s.id;
        }
    }
    return pop.species.front().id;
}

}  // namespace detail

// The full evolution-with-criteria loop for one class: evolve generations,
// pick each generation's best by loss with layer-wise CMI tie-breaks, and
// halt on offspring loss degradation, CMI increase, the fitness threshold,
// or the generation cap.
inline SubModel train_sub_model(int class_id, const TraceSet& pool, const EnsembleConfig& config,
                                std::uint64_t seed) {
    std::mt19937_64 rng = make_rng(seed);
    const TraceSet ova = build_ova_dataset(pool, class_id, rng);
    const EvolutionConfig cfg = config.evolution.resolved_for(ova.f, 2);
    cfg.validate();

    const LabeledBatch batch = make_reference_batch(ova, cfg.batch_size, rng);
    const GramMatrix labels = label_gram(std::span<const int>(batch.labels));
    const KernelSpec kernel = KernelSpec::gaussian_auto();

    SubModel sub;
    sub.class_id = class_id;

    Population pop = initial_population(ova.f, 2, cfg, rng);
    evaluate_population(pop, batch);

    const std::vector<const Genome*> first_members = pop.all_members();
    GenerationSnapshot snap_prev;
    GenerationSnapshot snap_cur = make_snapshot(
        1, select_best_genome(first_members, {}, labels, batch.inputs, kernel, cfg.alpha),
        batch.inputs, kernel);
    sub.trace.push_back({1, snap_cur.best_loss, std::numeric_limits<double>::quiet_NaN()});

    std::uint32_t t = 1;
    StopDecision decision;
    while (true) {
        if (snap_cur.best_loss <= cfg.fitness_threshold) {
            decision.stopped = true;
            decision.reason = StopReason::fitness_threshold;
            decision.final_genome = snap_cur.best_genome;
            sub.generations = t;
            break;
        }
        if (t >= static_cast<std::uint32_t>(cfg.max_generations)) {
            decision.stopped = true;
            decision.reason = StopReason::max_generations;
            decision.final_genome = snap_cur.best_genome;
            sub.generations = t;
            break;
        }

        const std::uint32_t elite_species = detail::species_id_of(pop, snap_cur.best_genome.id);
        std::map<std::uint32_t, const Genome*> elites;
        for (const Species& s : pop.species) elites[s.id] = &s.best();
        const Genome* population_best = &pop.best_genome();

        Population next = evolve_generation(pop, batch, cfg, rng);

        if (t >= 2) {
            std::vector<const Genome*> offspring;
            for (const Species& s : next.species) {
                if (s.id != elite_species) continue;
                for (const Genome& g : s.members) offspring.push_back(&g);
            }
            std::sort(offspring.begin(), offspring.end(),
                      [](const Genome* a, const Genome* b) { return a->id < b->id; });
            const StopDecision d = should_stop(snap_cur, snap_prev, offspring, labels,
                                               batch.inputs, kernel, cfg.alpha);
            if (d.stopped) {
                decision = d;
                sub.generations = t + 1;
                // Record the rejected generation so the trace shows the
                // degradation that triggered the halt.
                const Genome& rejected_best = next.best_genome();
                const LayerGrams rejectedrams = collect_layer_grams(
                    NetworkEvaluator(rejected_best), batch.inputs, kernel);
                sub.trace.push_back(
                    {t + 1, rejected_best.fitness,
                     cmi(std::span<const GramMatrix>(rejectedrams.from_output(1)), labels,
                         std::span<const GramMatrix>(snap_cur.grams.from_output(1)), cfg.alpha)});
                pop = std::move(next);
                break;
            }
        }

        const std::vector<const Genome*> candidates = next.all_members();
        std::vector<const Genome*> parents;
        parents.reserve(candidates.size());
        for (const Genome* g : candidates) {
            const std::uint32_t sid = detail::species_id_of(next, g->id);
            auto it = elites.find(sid);
            parents.push_back(it != elites.end() ? it->second : population_best);
        }
        const Genome& best_next =
            select_best_genome(candidates, parents, labels, batch.inputs, kernel, cfg.alpha);

        GenerationSnapshot snap_next = make_snapshot(t + 1, best_next, batch.inputs, kernel);
        const double trace_cmi =
            cmi(std::span<const GramMatrix>(snap_next.grams.from_output(1)), labels,
                std::span<const GramMatrix>(snap_cur.grams.from_output(1)), cfg.alpha);
        sub.trace.push_back({t + 1, snap_next.best_loss, trace_cmi});

        snap_prev = std::move(snap_cur);
        snap_cur = std::move(snap_next);
        pop = std::move(next);
        ++t;
    }

    sub.genome = *decision.final_genome;
    sub.stop_reason = decision.reason;
    sub.final_loss = sub.genome.fitness;
    sub.species_count = static_cast<std::uint32_t>(pop.species.size());
    return sub;
}

// Meta-feature row: sub-model c's confidence for its own target class.
class StackedPredictor {
public:
    explicit StackedPredictor(const StackedModel& model) : model_(&model) {
        evaluators_.reserve(model.sub_models.size());
        for (const SubModel& sub : model.sub_models) evaluators_.emplace_back(sub.genome);
    }

    Eigen::VectorXd meta_features(std::span<const float> trace) const {
        if (static_cast<int>(trace.size()) != model_->n_features) {
            throw InputError("predict: trace width " + std::to_string(trace.size()) + " != " +
                             std::to_string(model_->n_features));
        }
        std::vector<double> row(trace.begin(), trace.end());
        Eigen::VectorXd features(static_cast<int>(evaluators_.size()));
        for (std::size_t c = 0; c < evaluators_.size(); ++c) {
            features(static_cast<int>(c)) = evaluators_[c].forward(row)[0];
        }
        return features;
    }

    std::vector<double> predict(std::span<const float> trace) const {
        const Eigen::VectorXd x = meta_features(trace);
        Eigen::VectorXd z = model_->meta.coef * x + model_->meta.intercept;
        const double zmax = z.maxCoeff();
        Eigen::VectorXd e = (z.array() - zmax).exp();
        e /= e.sum();
        return {e.data(), e.data() + e.size()};
    }

private:
    const StackedModel* model_;
    std::vector<NetworkEvaluator> evaluators_;
};

inline std::vector<double> predict(const StackedModel& model, std::span<const float> trace) {
    return StackedPredictor(model).predict(trace);
}

inline MetaDataset build_meta_dataset(const std::vector<SubModel>& sub_models,
                                      const TraceSet& holdout) {
    if (sub_models.empty()) throw InputError("build_meta_dataset: no sub-models");
    std::vector<NetworkEvaluator> evaluators;
    evaluators.reserve(sub_models.size());
    for (const SubModel& sub : sub_models) evaluators.emplace_back(sub.genome);

    MetaDataset meta;
    meta.features.resize(holdout.n, static_cast<int>(sub_models.size()));
    meta.labels.reserve(static_cast<std::size_t>(holdout.n));
    std::vector<double> row(static_cast<std::size_t>(holdout.f));
    for (int i = 0; i < holdout.n; ++i) {
        const auto src = holdout.row(i);
        std::copy(src.begin(), src.end(), row.begin());
        for (std::size_t c = 0; c < evaluators.size(); ++c) {
            meta.features(i, static_cast<int>(c)) = evaluators[c].forward(row)[0];
        }
        meta.labels.push_back(holdout.labels[static_cast<std::size_t>(i)]);
    }
    return meta;
}

namespace detail {

inline double multinomial_loss(const Eigen::MatrixXd& x, const std::vector<int>& y,
                               const Eigen::MatrixXd& w, const Eigen::VectorXd& b, double l2) {
    const int n = static_cast<int>(x.rows());
    Eigen::MatrixXd z = x * w.transpose();
    z.rowwise() += b.transpose();
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double zmax = z.row(i).maxCoeff();
        const double lse = zmax + std::log((z.row(i).array() - zmax).exp().sum());
        loss += lse - z(i, y[static_cast<std::size_t>(i)]);
    }
    return loss / n + 0.5 * l2 * w.squaredNorm();
}

}  // namespace detail

// L2-regularized multinomial logistic regression, fit by full-batch gradient
// descent with backtracking line search, so the training loss is
// non-increasing at every accepted step.
inline MetaWeights train_meta_learner(const MetaDataset& meta, double reg_strength = 1e-4,
                                      int max_iters = 500, double tol = 1e-6) {
    const int n = static_cast<int>(meta.features.rows());
    const int d = static_cast<int>(meta.features.cols());
    if (n == 0) throw InputError("train_meta_learner: empty meta dataset");
    int n_classes = 0;
    for (int label : meta.labels) n_classes = std::max(n_classes, label + 1);
    std::set<int> distinct(meta.labels.begin(), meta.labels.end());
    if (distinct.size() < 2) {
        throw InputError("train_meta_learner: meta dataset holds a single class");
    }

    MetaWeights weights;
    weights.coef = Eigen::MatrixXd::Zero(n_classes, d);
    weights.intercept = Eigen::VectorXd::Zero(n_classes);

    double loss = detail::multinomial_loss(meta.features, meta.labels, weights.coef,
                                           weights.intercept, reg_strength);
    for (int iter = 0; iter < max_iters; ++iter) {
        Eigen::MatrixXd z = meta.features * weights.coef.transpose();
        z.rowwise() += weights.intercept.transpose();
        Eigen::MatrixXd p(n, n_classes);
        for (int i = 0; i < n; ++i) {
            const double zmax = z.row(i).maxCoeff();
            Eigen::ArrayXd e = (z.row(i).array() - zmax).exp();
            p.row(i) = (e / e.sum()).matrix();
        }
        for (int i = 0; i < n; ++i) p(i, meta.labels[static_cast<std::size_t>(i)]) -= 1.0;
        p /= static_cast<double>(n);
        const Eigen::MatrixXd grad_w = p.transpose() * meta.features + reg_strength * weights.coef;
        const Eigen::VectorXd grad_b = p.colwise().sum().transpose();

        const double grad_norm2 = grad_w.squaredNorm() + grad_b.squaredNorm();
        if (grad_norm2 < 1e-18) break;

        double step = 1.0;
        double next_loss = loss;
        Eigen::MatrixXd w_try;
        Eigen::VectorXd b_try;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            w_try = weights.coef - step * grad_w;
            b_try = weights.intercept - step * grad_b;
            next_loss = detail::multinomial_loss(meta.features, meta.labels, w_try, b_try,
                                                 reg_strength);
            if (next_loss <= loss - 1e-4 * step * grad_norm2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // no descent direction progress left at double precision
        weights.coef = std::move(w_try);
        weights.intercept = std::move(b_try);
        const double improvement = loss - next_loss;
        loss = next_loss;
        if (improvement <= tol * std::max(1.0, std::abs(loss))) break;
    }
    return weights;
}

// Runs fn(0..count-1) on up to `workers` threads. Work items must be
// independent; the first exception wins and is rethrown on the caller.
inline void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& th : threads) th.join();
    if (failure) std::rethrow_exception(failure);
}

struct HoldoutSplit {
    TraceSet sub_model_pool;
    TraceSet stacking_holdout;
};

// Per class: shuffle, reserve the last `holdout_per_class` rows for the
// stacking slice, leave the rest for sub-model training. The two parts are
// disjoint by construction (no meta-learner leakage).
inline HoldoutSplit split_stacking_holdout(const TraceSet& set, int holdout_per_class,
                                           std::mt19937_64& rng) {
    auto by_class = rows_by_class(set);
    std::vector<int> pool_rows;
    std::vector<int> holdout_rows;
    for (auto& [cls, rows] : by_class) {
        if (static_cast<int>(rows.size()) <= holdout_per_class) {
            throw InputError("split_stacking_holdout: class " + std::to_string(cls) +
                             " has too few traces for a " + std::to_string(holdout_per_class) +
                             "-trace holdout");
        }
        std::shuffle(rows.begin(), rows.end(), rng);
        const std::size_t cut = rows.size() - static_cast<std::size_t>(holdout_per_class);
        pool_rows.insert(pool_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(cut));
        holdout_rows.insert(holdout_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(cut),
                            rows.end());
    }
    std::sort(pool_rows.begin(), pool_rows.end());
    std::sort(holdout_rows.begin(), holdout_rows.end());
    return {set.select(pool_rows), set.select(holdout_rows)};
}

// Trains the m sub-models (in parallel when workers > 1; results are
// identical regardless of worker count because every class draws from its
// own derived seed) and the stacking meta-learner on the held-out slice.
inline StackedModel train_stacked_model(const TraceSet& training_set, const EnsembleConfig& config,
                                        std::uint64_t master_seed, int workers = 1,
                                        std::uint64_t config_fingerprint = 0) {
    training_set.validate();
    if (!training_set.scaled) {
        throw InputError("train_stacked_model: features must be scaled to [0,1] first");
    }
    std::mt19937_64 split_rng = make_rng(derive_seed(master_seed, "stacking-holdout"));
    const HoldoutSplit split =
        split_stacking_holdout(training_set, config.holdout_per_class, split_rng);

    StackedModel model;
    model.n_classes = training_set.m;
    model.n_features = training_set.f;
    model.config_fingerprint = config_fingerprint;
    model.sub_models.resize(static_cast<std::size_t>(training_set.m));
    parallel_for(training_set.m, workers, [&](int c) {
        model.sub_models[static_cast<std::size_t>(c)] = train_sub_model(
            c, split.sub_model_pool, config, derive_seed(master_seed, "submodel", c));
    });

    const MetaDataset meta = build_meta_dataset(model.sub_models, split.stacking_holdout);
    model.meta = train_meta_learner(meta, config.meta_l2, config.meta_max_iters, config.meta_tol);
    return model;
}

struct FoldResult {
    int fold_index = 0;
    StackedModel model;
    TraceSet heldout;
    double heldout_log_loss = 0.0;
    double heldout_accuracy = 0.0;
};

// k-fold protocol: per fold, train on the union of the other folds, evaluate
// on the held-out fold.
inline std::vector<FoldResult> kfold_train(const TraceSet& set, int k, const EnsembleConfig& config,
                                           std::uint64_t master_seed, int workers = 1) {
    std::mt19937_64 fold_rng = make_rng(derive_seed(master_seed, "kfold"));
    const std::vector<TraceSet> folds = kfold_split(set, k, fold_rng);

    std::vector<FoldResult> results;
    results.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::vector<TraceSet> train_parts;
        for (int j = 0; j < k; ++j) {
            if (j != i) train_parts.push_back(folds[static_cast<std::size_t>(j)]);
        }
        const TraceSet train_set = concat(train_parts);
        FoldResult fold;
        fold.fold_index = i;
        fold.model = train_stacked_model(train_set, config, derive_seed(master_seed, "fold", i),
                                         workers);
        fold.heldout = folds[static_cast<std::size_t>(i)];

        const StackedPredictor predictor(fold.model);
        double loss = 0.0;
        int correct = 0;
        constexpr double eps = 1e-12;
        for (int r = 0; r < fold.heldout.n; ++r) {
            const std::vector<double> probs = predictor.predict(fold.heldout.row(r));
            const int label = fold.heldout.labels[static_cast<std::size_t>(r)];
            loss -= std::log(std::clamp(probs[static_cast<std::size_t>(label)], eps, 1.0 - eps));
            const auto arg = std::max_element(probs.begin(), probs.end());
            if (static_cast<int>(arg - probs.begin()) == label) ++correct;
        }
        fold.heldout_log_loss = loss / std::max(1, fold.heldout.n);
        fold.heldout_accuracy = static_cast<double>(correct) / std::max(1, fold.heldout.n);
        results.push_back(std::move(fold));
    }
    return results;
}

// --- serialization ----------------------------------------------------
//
// Container: magic "INEATSM1" | u32 version | u64 config fingerprint |
// u32 n_classes | u32 n_features | feature_spec string | per class: header
// fields + training trace + genome record | meta coefficient matrix.

namespace detail {

constexpr char stacked_magic[8] = {'I', 'N', 'E', 'A', 'T', 'S', 'M', '1'};
constexpr std::uint32_t stacked_version = 1;

inline void write_string(std::ostream& out, const std::string& s) {
    write_le(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    const auto len = read_le<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw FormatError("string field truncated");
    return s;
}

}  // namespace detail

inline void write_stacked_model(std::ostream& out, const StackedModel& model) {
    out.write(detail::stacked_magic, sizeof(detail::stacked_magic));
    detail::write_le(out, detail::stacked_version);
    detail::write_le(out, model.config_fingerprint);
    detail::write_le(out, static_cast<std::uint32_t>(model.n_classes));
    detail::write_le(out, static_cast<std::uint32_t>(model.n_features));
    detail::write_string(out, model.feature_spec);
    for (const SubModel& sub : model.sub_models) {
        detail::write_le(out, static_cast<std::uint32_t>(sub.class_id));
        detail::write_le(out, static_cast<std::uint8_t>(sub.stop_reason));
        detail::write_le(out, sub.generations);
        detail::write_le(out, sub.species_count);
        detail::write_f64(out, sub.final_loss);
        detail::write_le(out, static_cast<std::uint32_t>(sub.trace.size()));
        for (const TraceRow& row : sub.trace) {
            detail::write_le(out, row.generation);
            detail::write_f64(out, row.best_loss);
            detail::write_f64(out, row.last_layer_cmi);
        }
        write_genome(out, sub.genome);
    }
    detail::write_le(out, static_cast<std::uint32_t>(model.meta.coef.rows()));
    detail::write_le(out, static_cast<std::uint32_t>(model.meta.coef.cols()));
    for (int r = 0; r < model.meta.coef.rows(); ++r) {
        for (int c = 0; c < model.meta.coef.cols(); ++c) detail::write_f64(out, model.meta.coef(r, c));
    }
    for (int r = 0; r < model.meta.intercept.size(); ++r) {
        detail::write_f64(out, model.meta.intercept(r));
    }
    detail::write_le(out, static_cast<std::uint32_t>(model.scaling.min.size()));
    for (float v : model.scaling.min) detail::write_f32(out, v);
    for (float v : model.scaling.max) detail::write_f32(out, v);
    if (!out) throw IoError("stacked model write failed");
}

inline StackedModel read_stacked_model(std::istream& in) {
    char magic[sizeof(detail::stacked_magic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), detail::stacked_magic)) {
        throw FormatError("bad stacked-model magic", 0);
    }
    const auto version = detail::read_le<std::uint32_t>(in);
    if (version != detail::stacked_version) {
        throw FormatError("unsupported stacked-model version " + std::to_string(version), 8);
    }
    StackedModel model;
    model.config_fingerprint = detail::read_le<std::uint64_t>(in);
    model.n_classes = static_cast<int>(detail::read_le<std::uint32_t>(in));
    model.n_features = static_cast<int>(detail::read_le<std::uint32_t>(in));
    model.feature_spec = detail::read_string(in);
    model.sub_models.resize(static_cast<std::size_t>(model.n_classes));
    for (int c = 0; c < model.n_classes; ++c) {
        SubModel& sub = model.sub_models[static_cast<std::size_t>(c)];
        sub.class_id = static_cast<int>(detail::read_le<std::uint32_t>(in));
        sub.stop_reason = static_cast<StopReason>(detail::read_le<std::uint8_t>(in));
        sub.generations = detail::read_le<std::uint32_t>(in);
        sub.species_count = detail::read_le<std::uint32_t>(in);
        sub.final_loss = detail::read_f64(in);
        const auto rows = detail::read_le<std::uint32_t>(in);
        sub.trace.resize(rows);
        for (TraceRow& row : sub.trace) {
            row.generation = detail::read_le<std::uint32_t>(in);
            row.best_loss = detail::read_f64(in);
            row.last_layer_cmi = detail::read_f64(in);
        }
        sub.genome = read_genome(in);
    }
    const auto rows = detail::read_le<std::uint32_t>(in);
    const auto cols = detail::read_le<std::uint32_t>(in);
    model.meta.coef.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) model.meta.coef(r, c) = detail::read_f64(in);
    }
    model.meta.intercept.resize(rows);
    for (std::uint32_t r = 0; r < rows; ++r) model.meta.intercept(r) = detail::read_f64(in);
    const auto scaling_width = detail::read_le<std::uint32_t>(in);
    model.scaling.min.resize(scaling_width);
    model.scaling.max.resize(scaling_width);
    for (float& v : model.scaling.min) {
        const std::uint32_t bits = detail::read_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof(v));
    }
    for (float& v : model.scaling.max) {
        const std::uint32_t bits = detail::read_le<std::uint32_t>(in);
        std::memcpy(&v, &bits, sizeof(v));
    }
    in.peek();
    if (!in.eof()) throw FormatError("trailing bytes after stacked model");
    return model;
}

inline void save_stacked_model(const std::string& path, const StackedModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_stacked_model(out, model);
}

inline StackedModel load_stacked_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_stacked_model(in);
}

}  // namespace infoneat
