#pragma once

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "infoneat/config.hpp"
#include "infoneat/data.hpp"
#include "infoneat/ensemble.hpp"
#include "infoneat/errors.hpp"
#include "infoneat/evaluation.hpp"
#include "infoneat/report.hpp"
#include "infoneat/rng.hpp"

namespace infoneat {

namespace detail {

inline void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

inline std::string class_trace_path(const std::string& out_dir, int class_id) {
    char name[64];
    std::snprintf(name, sizeof(name), "class_%03d.csv", class_id);
    return out_dir + "/training_traces/" + name;
}

// Keeps sampling until every class holds at least per_class traces, then
// truncates to an exactly balanced set. Deterministic for a given generator.
inline TraceSet synth_balanced(const SynthSpec& spec, std::mt19937_64& rng) {
    const int want = spec.n_per_class;
    TraceSet acc = synth_traces(spec, spec.n_per_class * spec.n_classes * 3 / 2, rng);
    for (int rounds = 0; rounds < 64; ++rounds) {
        auto by_class = rows_by_class(acc);
        std::size_t scarcest = static_cast<int>(by_class.size()) == spec.n_classes
                                   ? std::numeric_limits<std::size_t>::max()
                                   : 0;
        for (const auto& [cls, rows] : by_class) scarcest = std::min(scarcest, rows.size());
        if (scarcest >= static_cast<std::size_t>(want)) break;
        const TraceSet extra = synth_traces(spec, spec.n_per_class * spec.n_classes / 2, rng);
        acc = concat(std::vector<TraceSet>{acc, extra});
    }
    TraceSet balanced = undersample_balance(acc, want);
    balanced.seed = acc.seed;
    return balanced;
}

}  // namespace detail

// Writes the balanced training set and a uniformly sampled attack set, then
// reloads both as a write audit.
inline void cmd_synth(const RunConfig& config) {
    const std::uint64_t seed = config.require_seed("synth");
    config.synth.validate();
    detail::ensure_dir(config.out_dir);

    std::mt19937_64 train_rng = make_rng(derive_seed(seed, "synth-train"));
    TraceSet train = detail::synth_balanced(config.synth, train_rng);
    train.seed = seed;
    train.source = "synthetic/train";

    std::mt19937_64 attack_rng = make_rng(derive_seed(seed, "synth-attack"));
    TraceSet attack = synth_traces(config.synth, config.synth_attack_traces, attack_rng);
    attack.seed = seed;
    attack.source = "synthetic/attack";

    save_traceset(config.train_path(), train);
    save_traceset(config.attack_path(), attack);

    const TraceSet train_back = load_traceset(config.train_path());
    const TraceSet attack_back = load_traceset(config.attack_path());
    train_back.validate();
    attack_back.validate();
    if (train_back.n != train.n || attack_back.n != attack.n) {
        throw IoError("synth: reloaded sets do not match what was written");
    }
    std::cout << "synth: wrote " << train.n << " training traces to " << config.train_path()
              << " and " << attack.n << " attack traces to " << config.attack_path() << "\n";
}

// Balance, scale, shuffle, train the m sub-models plus the meta-learner, and
// persist the model with its per-class training traces.
inline void cmd_train(const RunConfig& config) {
    const std::uint64_t seed = config.require_seed("train");
    detail::ensure_dir(config.out_dir);
    detail::ensure_dir(config.out_dir + "/training_traces");

    TraceSet raw = load_traceset(config.train_path());
    TraceSet balanced = undersample_balance(raw, config.per_class_cap);
    ScaledTraceSet scaled = scale_features(balanced);
    std::mt19937_64 shuffle_rng = make_rng(derive_seed(seed, "train-shuffle"));
    TraceSet training = shuffle(scaled.set, shuffle_rng);

    StackedModel model = train_stacked_model(training, config.ensemble, seed, config.workers,
                                             config.fingerprint());
    model.scaling = scaled.stats;
    save_stacked_model(config.model_file(), model);

    for (const SubModel& sub : model.sub_models) {
        write_text_file(detail::class_trace_path(config.out_dir, sub.class_id),
                        training_trace_csv(sub.trace));
    }

    const StackedModel back = load_stacked_model(config.model_file());
    if (back.n_classes != model.n_classes ||
        back.sub_models.size() != model.sub_models.size()) {
        throw IoError("train: reloaded model does not match what was written");
    }
    std::cout << "train: " << model.n_classes << " sub-models trained on " << training.n
              << " traces; model written to " << config.model_file() << "\n";
}

inline LeakageModelSpec leakage_for(const StackedModel& model) {
    if (model.n_classes == 256) return LeakageModelSpec::aes_id();
    return LeakageModelSpec::synthetic(default_sbox(model.n_classes));
}

// Rank-curve attack: scale the attack set with the model's training
// statistics, compute the averaged rank curve and the T_GE table, and emit
// CSV + SVG artifacts.
inline void cmd_attack(const RunConfig& config) {
    const std::uint64_t seed = config.require_seed("attack");
    detail::ensure_dir(config.out_dir);

    const StackedModel model = load_stacked_model(config.model_file());
    TraceSet attack = load_traceset(config.attack_path());
    if (static_cast<int>(model.scaling.min.size()) == attack.f && !attack.scaled) {
        std::size_t clamped = 0;
        attack = scale_apply(attack, model.scaling, &clamped);
        if (clamped > 0) {
            std::cout << "attack: " << clamped
                      << " feature values fell outside the training range and were clamped\n";
        }
    }

    std::vector<int> counts = config.attack_trace_counts;
    std::erase_if(counts, [&](int c) { return c > attack.n; });
    if (counts.empty()) throw InputError("attack: every requested trace count exceeds the set size");

    const LeakageModelSpec leakage = leakage_for(model);
    const RankCurve curve = average_rank(model, attack, leakage, counts,
                                         config.attack_repetitions,
                                         derive_seed(seed, "attack"));
    const std::vector<TgeRow> tge = tge_metrics(curve, config.tge_thresholds);

    write_text_file(config.out_dir + "/rank_curve.csv", rank_curve_csv(curve));
    write_text_file(config.out_dir + "/rank_curve.svg", svg_rank_chart(curve));
    write_text_file(config.out_dir + "/tge.csv", tge_csv(tge));
    std::cout << "attack: rank curve over " << curve.n_repetitions << " repetitions written to "
              << config.out_dir << "/rank_curve.{csv,svg}\n";
}

// Merges the persisted artifacts of a run into one markdown document.
inline void cmd_report(const RunConfig& config) {
    detail::ensure_dir(config.out_dir);
    const StackedModel model = load_stacked_model(config.model_file());

    RankCurve curve;
    std::vector<TgeRow> tge;
    bool have_attack = false;
    const std::string curve_path = config.out_dir + "/rank_curve.csv";
    if (std::filesystem::exists(curve_path)) {
        curve = parse_rank_curve_csv(read_text_file(curve_path));
        curve.n_repetitions = config.attack_repetitions;
        tge = tge_metrics(curve, config.tge_thresholds);
        have_attack = true;
    }

    const std::string report =
        run_report(model, have_attack ? &curve : nullptr, have_attack ? &tge : nullptr);
    write_text_file(config.out_dir + "/report.md", report);
    std::cout << "report: written to " << config.out_dir << "/report.md\n";
}

}  // namespace infoneat
