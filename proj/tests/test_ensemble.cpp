#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "infoneat/ensemble.hpp"
#include "infoneat/rng.hpp"

using namespace infoneat;

namespace {

// Four well-separated clusters on two features; any one-vs-rest slice of it
// is linearly separable.
TraceSet clustered_set(int per_class, double noise, std::mt19937_64& rng) {
    TraceSet set;
    set.f = 2;
    set.m = 4;
    set.keys = {0};
    set.scaled = true;
    std::normal_distribution<double> jitter(0.0, noise);
    const double centers[4][2] = {{0.15, 0.15}, {0.85, 0.15}, {0.15, 0.85}, {0.85, 0.85}};
    for (int cls = 0; cls < 4; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            const double x = std::clamp(centers[cls][0] + jitter(rng), 0.0, 1.0);
            const double y = std::clamp(centers[cls][1] + jitter(rng), 0.0, 1.0);
            set.traces.push_back(static_cast<float>(x));
            set.traces.push_back(static_cast<float>(y));
            set.labels.push_back(static_cast<std::uint8_t>(cls));
            set.plaintexts.push_back(static_cast<std::uint8_t>(cls));
            set.ids.push_back(static_cast<std::uint32_t>(set.n));
            ++set.n;
        }
    }
    return set;
}

EnsembleConfig fast_config() {
    EnsembleConfig cfg;
    cfg.evolution.batch_size = 40;
    cfg.evolution.initial_num_hidden = 4;
    cfg.holdout_per_class = 6;
    return cfg;
}

}  // namespace

TEST_CASE("build_ova_dataset") {
    std::mt19937_64 rng(1);
    SECTION("abundant negatives balance to the positive count") {
        TraceSet set = clustered_set(150, 0.03, rng);
        const TraceSet ova = build_ova_dataset(set, 2, rng);
        CHECK(ova.n == 300);
        int positives = 0;
        for (std::uint8_t l : ova.labels) {
            if (l == 0) ++positives;
        }
        CHECK(positives == 150);
        CHECK(ova.m == 2);
    }
    SECTION("scarce negatives truncate both sides") {
        // 3 classes with 5 traces each: picking the 10-strong side impossible.
        TraceSet set = clustered_set(5, 0.03, rng);
        // Remove class 3 entirely and give class 0 extra traces.
        std::vector<int> keep;
        for (int i = 0; i < set.n; ++i) {
            if (set.labels[static_cast<std::size_t>(i)] != 3) keep.push_back(i);
        }
        TraceSet trimmed = set.select(keep);
        trimmed.m = 3;
        const TraceSet ova = build_ova_dataset(trimmed, 0, rng);
        CHECK(ova.n == 10);  // 5 positives, 5 of the 10 available negatives
    }
    SECTION("positive fraction is exactly one half across random draws") {
        TraceSet set = clustered_set(40, 0.05, rng);
        for (int trial = 0; trial < 1000; ++trial) {
            const TraceSet ova = build_ova_dataset(set, trial % 4, rng);
            int positives = 0;
            for (std::uint8_t l : ova.labels) {
                if (l == 0) ++positives;
            }
            CHECK(positives * 2 == ova.n);
        }
    }
    SECTION("absent class rejected") {
        TraceSet set = clustered_set(10, 0.05, rng);
        set.m = 5;  // class 4 has no traces
        CHECK_THROWS_AS(build_ova_dataset(set, 4, rng), InputError);
    }
}

TEST_CASE("train_sub_model on separable data") {
    std::mt19937_64 rng(2);
    TraceSet set = clustered_set(60, 0.02, rng);
    const EnsembleConfig cfg = fast_config();

    SECTION("reaches a low loss before the generation cap") {
        const SubModel sub = train_sub_model(1, set, cfg, 12345);
        CHECK(sub.generations <= static_cast<std::uint32_t>(cfg.evolution.max_generations));
        CHECK(sub.final_loss < 0.1);
        CHECK(!sub.trace.empty());
        CHECK(sub.trace.front().generation == 1);
    }
    SECTION("fixed seed gives identical sub-models") {
        const SubModel a = train_sub_model(2, set, cfg, 777);
        const SubModel b = train_sub_model(2, set, cfg, 777);
        CHECK(a.generations == b.generations);
        CHECK(a.final_loss == b.final_loss);
        CHECK(a.stop_reason == b.stop_reason);
        REQUIRE(a.genome.connections.size() == b.genome.connections.size());
        for (std::size_t i = 0; i < a.genome.connections.size(); ++i) {
            CHECK(a.genome.connections[i].weight == b.genome.connections[i].weight);
        }
    }
    SECTION("stops before the cap on easy data") {
        int early = 0;
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            const SubModel sub = train_sub_model(0, set, cfg, 9000 + seed);
            if (sub.stop_reason == StopReason::loss_degraded ||
                sub.stop_reason == StopReason::cmi_increased ||
                sub.stop_reason == StopReason::fitness_threshold) {
                ++early;
            }
        }
        CHECK(early >= 3);
    }
}

TEST_CASE("build_meta_dataset") {
    std::mt19937_64 rng(3);
    TraceSet set = clustered_set(50, 0.02, rng);
    const EnsembleConfig cfg = fast_config();
    std::vector<SubModel> subs;
    for (int c = 0; c < 4; ++c) subs.push_back(train_sub_model(c, set, cfg, 100 + c));

    const TraceSet holdout = clustered_set(10, 0.02, rng);
    const MetaDataset meta = build_meta_dataset(subs, holdout);

    SECTION("feature shape and range") {
        CHECK(meta.features.rows() == holdout.n);
        CHECK(meta.features.cols() == 4);
        CHECK(meta.features.minCoeff() >= 0.0);
        CHECK(meta.features.maxCoeff() <= 1.0);
    }
    SECTION("own-class confidence correlates with the class indicator") {
        for (int c = 0; c < 4; ++c) {
            double mean_in = 0.0, mean_out = 0.0;
            int n_in = 0, n_out = 0;
            for (int i = 0; i < holdout.n; ++i) {
                if (holdout.labels[static_cast<std::size_t>(i)] == c) {
                    mean_in += meta.features(i, c);
                    ++n_in;
                } else {
                    mean_out += meta.features(i, c);
                    ++n_out;
                }
            }
            CHECK(mean_in / n_in > mean_out / n_out);
        }
    }
}

TEST_CASE("train_meta_learner") {
    SECTION("zero iterations returns the all-zero initialization") {
        MetaDataset meta;
        meta.features = Eigen::MatrixXd::Random(10, 3).cwiseAbs();
        meta.labels = {0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
        const MetaWeights w = train_meta_learner(meta, 1e-4, 0, 1e-6);
        CHECK(w.coef.cwiseAbs().maxCoeff() == 0.0);
        CHECK(w.intercept.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("separable meta features reach training accuracy 1") {
        MetaDataset meta;
        const int per_class = 20;
        meta.features.resize(3 * per_class, 3);
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < per_class; ++i) {
                for (int f = 0; f < 3; ++f) {
                    meta.features(c * per_class + i, f) = (f == c) ? 0.9 : 0.1;
                }
                meta.labels.push_back(c);
            }
        }
        const MetaWeights w = train_meta_learner(meta, 1e-4, 500, 1e-9);
        int correct = 0;
        for (int i = 0; i < meta.features.rows(); ++i) {
            Eigen::VectorXd z = w.coef * meta.features.row(i).transpose() + w.intercept;
            int arg = 0;
            z.maxCoeff(&arg);
            if (arg == meta.labels[static_cast<std::size_t>(i)]) ++correct;
        }
        CHECK(correct == meta.features.rows());
    }
    SECTION("training loss is monotone non-increasing") {
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> feat(0.0, 1.0);
        std::uniform_int_distribution<int> lab(0, 3);
        MetaDataset meta;
        meta.features.resize(40, 4);
        for (int i = 0; i < 40; ++i) {
            for (int f = 0; f < 4; ++f) meta.features(i, f) = feat(rng);
            meta.labels.push_back(lab(rng));
        }
        // Track the loss through successive one-iteration fits warm-started
        // by re-running with increasing iteration budgets.
        double previous = std::numeric_limits<double>::infinity();
        for (int iters = 0; iters <= 30; ++iters) {
            const MetaWeights w = train_meta_learner(meta, 1e-4, iters, 0.0);
            const double loss = detail::multinomial_loss(meta.features, meta.labels, w.coef,
                                                         w.intercept, 1e-4);
            CHECK(loss <= previous + 1e-12);
            previous = loss;
        }
    }
    SECTION("single-class dataset rejected") {
        MetaDataset meta;
        meta.features = Eigen::MatrixXd::Random(5, 2).cwiseAbs();
        meta.labels = {1, 1, 1, 1, 1};
        CHECK_THROWS_AS(train_meta_learner(meta, 1e-4, 10, 1e-6), InputError);
    }
}

TEST_CASE("stacked predict") {
    std::mt19937_64 rng(5);
    TraceSet set = clustered_set(60, 0.02, rng);
    const EnsembleConfig cfg = fast_config();
    StackedModel model = train_stacked_model(set, cfg, 4242, 2, 0xfeed);

    SECTION("probabilities normalize and prediction is deterministic") {
        const StackedPredictor predictor(model);
        const auto probs_a = predictor.predict(set.row(0));
        const auto probs_b = predictor.predict(set.row(0));
        CHECK(probs_a == probs_b);
        double sum = 0.0;
        for (double p : probs_a) sum += p;
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("all-zero meta weights produce the uniform distribution") {
        StackedModel uniform = model;
        uniform.meta.coef.setZero();
        uniform.meta.intercept.setZero();
        const auto probs = predict(uniform, set.row(3));
        for (double p : probs) CHECK(p == Catch::Approx(0.25).margin(1e-12));
    }
    SECTION("matches the two-stage compositional oracle") {
        const StackedPredictor predictor(model);
        std::vector<NetworkEvaluator> evals;
        for (const SubModel& sub : model.sub_models) evals.emplace_back(sub.genome);
        for (int i = 0; i < 100; ++i) {
            const auto trace = set.row(i % set.n);
            // Stage 1 by hand: per-class confidences.
            Eigen::VectorXd x(4);
            std::vector<double> row(trace.begin(), trace.end());
            for (int c = 0; c < 4; ++c) x(c) = evals[static_cast<std::size_t>(c)].forward(row)[0];
            // Stage 2 by hand: logistic layer softmax.
            Eigen::VectorXd z = model.meta.coef * x + model.meta.intercept;
            Eigen::ArrayXd e = (z.array() - z.maxCoeff()).exp();
            Eigen::ArrayXd expected = e / e.sum();
            const auto got = predictor.predict(trace);
            for (int c = 0; c < 4; ++c) {
                CHECK(got[static_cast<std::size_t>(c)] ==
                      Catch::Approx(expected(c)).margin(1e-10));
            }
        }
    }
    SECTION("width mismatch rejected") {
        std::vector<float> wrong(5, 0.1f);
        CHECK_THROWS_AS(predict(model, wrong), InputError);
    }
    SECTION("model file round trip preserves predictions bit-exactly") {
        std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
        write_stacked_model(buffer, model);
        const StackedModel back = read_stacked_model(buffer);
        CHECK(back.config_fingerprint == model.config_fingerprint);
        const auto probs_a = predict(model, set.row(7));
        const auto probs_b = predict(back, set.row(7));
        CHECK(probs_a == probs_b);

        std::stringstream second(std::ios::in | std::ios::out | std::ios::binary);
        write_stacked_model(second, back);
        CHECK(buffer.str() == second.str());
    }
}

TEST_CASE("stacking holdout never leaks into sub-model training") {
    std::mt19937_64 rng(6);
    TraceSet set = clustered_set(40, 0.03, rng);
    std::mt19937_64 split_rng = make_rng(derive_seed(31337, "stacking-holdout"));
    const HoldoutSplit split = split_stacking_holdout(set, 6, split_rng);
    std::set<std::uint32_t> pool_ids(split.sub_model_pool.ids.begin(),
                                     split.sub_model_pool.ids.end());
    for (std::uint32_t id : split.stacking_holdout.ids) {
        CHECK(pool_ids.count(id) == 0);
    }
    CHECK(split.sub_model_pool.n + split.stacking_holdout.n == set.n);
    auto by_class = rows_by_class(split.stacking_holdout);
    for (const auto& [cls, rows] : by_class) CHECK(rows.size() == 6);
}

TEST_CASE("kfold_train") {
    std::mt19937_64 rng(7);
    TraceSet set = clustered_set(30, 0.02, rng);
    EnsembleConfig cfg = fast_config();
    cfg.holdout_per_class = 4;
    cfg.evolution.batch_size = 24;

    const std::vector<FoldResult> folds = kfold_train(set, 2, cfg, 555, 2);
    REQUIRE(folds.size() == 2);
    SECTION("folds are disjoint and cover the set") {
        std::set<std::uint32_t> seen;
        int total = 0;
        for (const FoldResult& fold : folds) {
            total += fold.heldout.n;
            for (std::uint32_t id : fold.heldout.ids) CHECK(seen.insert(id).second);
        }
        CHECK(total == set.n);
    }
    SECTION("held-out evaluation is sane on separable data") {
        for (const FoldResult& fold : folds) {
            CHECK(fold.heldout_accuracy > 0.5);  // 4 classes, chance is 0.25
            CHECK(fold.model.sub_models.size() == 4);
        }
    }
}

TEST_CASE("parallel training matches serial training bit for bit") {
    std::mt19937_64 rng(8);
    TraceSet set = clustered_set(40, 0.02, rng);
    const EnsembleConfig cfg = fast_config();
    const StackedModel serial = train_stacked_model(set, cfg, 2024, 1, 1);
    const StackedModel parallel = train_stacked_model(set, cfg, 2024, 4, 1);

    std::stringstream a(std::ios::in | std::ios::out | std::ios::binary);
    std::stringstream b(std::ios::in | std::ios::out | std::ios::binary);
    write_stacked_model(a, serial);
    write_stacked_model(b, parallel);
    CHECK(a.str() == b.str());
}
