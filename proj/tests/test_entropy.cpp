#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "infoneat/entropy.hpp"
#include "oracle_shannon.hpp"

using namespace infoneat;

namespace {

Eigen::MatrixXd column_of(const std::vector<int>& values) {
    Eigen::MatrixXd m(static_cast<int>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<int>(i), 0) = values[i];
    return m;
}

// Discrete samples from an arbitrary weight vector.
std::vector<int> sample_discrete(const std::vector<double>& weights, int n, std::mt19937_64& rng) {
    std::discrete_distribution<int> dist(weights.begin(), weights.end());
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int& v : out) v = dist(rng);
    return out;
}

}  // namespace

TEST_CASE("gram_matrix partition-kernel basics") {
    SECTION("two identical samples") {
        const GramMatrix a = gram_matrix(column_of({7, 7}), KernelSpec::partition());
        CHECK(a.data(0, 0) == Catch::Approx(0.5));
        CHECK(a.data(0, 1) == Catch::Approx(0.5));
        CHECK(a.data(1, 0) == Catch::Approx(0.5));
        CHECK(a.data(1, 1) == Catch::Approx(0.5));
    }
    SECTION("two distinct samples") {
        const GramMatrix a = gram_matrix(column_of({1, 2}), KernelSpec::partition());
        CHECK(a.data(0, 0) == Catch::Approx(0.5));
        CHECK(a.data(0, 1) == 0.0);
        CHECK(a.data(1, 0) == 0.0);
    }
}

TEST_CASE("gram_matrix gaussian half-kernel distance") {
    // Samples 0 and sigma*sqrt(2 ln 2) give kernel value 1/2, normalized 1/4.
    const double sigma = 0.73;
    Eigen::MatrixXd samples(2, 1);
    samples << 0.0, sigma * std::sqrt(2.0 * std::log(2.0));
    const GramMatrix a = gram_matrix(samples, KernelSpec::gaussian(sigma));
    CHECK(a.data(0, 1) == Catch::Approx(0.25).epsilon(1e-12));
    CHECK(a.data(0, 0) == Catch::Approx(0.5));
    validate_gram(a);
}

TEST_CASE("gram_matrix input validation") {
    Eigen::MatrixXd one_row(1, 2);
    one_row << 1.0, 2.0;
    CHECK_THROWS_AS(gram_matrix(one_row, KernelSpec::partition()), SizeError);

    Eigen::MatrixXd with_nan(2, 1);
    with_nan << 1.0, std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(gram_matrix(with_nan, KernelSpec::partition()), InputError);

    Eigen::MatrixXd fine(2, 1);
    fine << 1.0, 2.0;
    CHECK_THROWS_AS(gram_matrix(fine, KernelSpec::gaussian_auto()), InputError);
}

TEST_CASE("renyi_entropy exact identities") {
    SECTION("uniform spectrum gives log2 n for any alpha") {
        for (int n : {2, 16, 150, 256}) {
            GramMatrix a{Eigen::MatrixXd::Identity(n, n) / n};
            CHECK(renyi_entropy(a, 1.01).bits == Catch::Approx(std::log2(n)).margin(1e-9));
        }
    }
    SECTION("rank-1 unit-trace matrix has zero entropy") {
        const int n = 32;
        Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(n));
        GramMatrix a{v * v.transpose()};
        CHECK(renyi_entropy(a, 1.01).bits == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("alpha domain") {
        GramMatrix a{Eigen::MatrixXd::Identity(4, 4) / 4};
        CHECK_THROWS_AS(renyi_entropy(a, 1.0), InputError);
        CHECK_THROWS_AS(renyi_entropy(a, -0.5), InputError);
    }
}

TEST_CASE("renyi_entropy approximates Shannon entropy on discrete data") {
    std::mt19937_64 rng(20240811);
    const int n = 512;
    for (int trial = 0; trial < 5; ++trial) {
        std::uniform_int_distribution<int> support(2, 12);
        std::uniform_real_distribution<double> weight(0.05, 1.0);
        std::vector<double> weights(static_cast<std::size_t>(support(rng)));
        for (double& w : weights) w = weight(rng);
        const std::vector<int> samples = sample_discrete(weights, n, rng);

        const GramMatrix a = gram_matrix(column_of(samples), KernelSpec::partition());
        const double estimated = renyi_entropy(a, 1.01).bits;
        const double expected = oracle::shannon_entropy(samples);
        CHECK(estimated == Catch::Approx(expected).margin(0.02));
    }
}

TEST_CASE("partition-kernel spectrum equals the empirical pmf") {
    std::mt19937_64 rng(7);
    const std::vector<int> samples = sample_discrete({0.5, 0.3, 0.2}, 64, rng);
    const GramMatrix a = gram_matrix(column_of(samples), KernelSpec::partition());
    std::vector<double> lambda = gram_eigenvalues(a);
    std::sort(lambda.begin(), lambda.end(), std::greater<>());

    std::map<int, int> counts;
    for (int v : samples) ++counts[v];
    std::vector<double> pmf;
    for (const auto& [value, count] : counts) pmf.push_back(count / 64.0);
    std::sort(pmf.begin(), pmf.end(), std::greater<>());

    double lambda_sum = 0.0;
    for (double v : lambda) lambda_sum += v;
    CHECK(lambda_sum == Catch::Approx(1.0).margin(1e-9));
    for (std::size_t i = 0; i < pmf.size(); ++i) {
        CHECK(lambda[i] == Catch::Approx(pmf[i]).margin(1e-9));
    }
}

TEST_CASE("joint_entropy") {
    SECTION("single factor reduces to renyi_entropy") {
        std::mt19937_64 rng(3);
        const std::vector<int> samples = sample_discrete({0.6, 0.4}, 50, rng);
        const GramMatrix a = gram_matrix(column_of(samples), KernelSpec::partition());
        const std::vector<GramMatrix> mats{a};
        CHECK(joint_entropy(mats, 1.01).bits ==
              Catch::Approx(renyi_entropy(a, 1.01).bits).margin(1e-12));
    }
    SECTION("duplicated partition factor is idempotent") {
        std::mt19937_64 rng(4);
        const std::vector<int> samples = sample_discrete({0.5, 0.25, 0.25}, 60, rng);
        const GramMatrix a = gram_matrix(column_of(samples), KernelSpec::partition());
        const std::vector<GramMatrix> mats{a, a};
        CHECK(joint_entropy(mats, 1.01).bits ==
              Catch::Approx(renyi_entropy(a, 1.01).bits).margin(1e-9));
    }
    SECTION("independent two-bit variables carry about 2 bits") {
        // X = {a,a,b,b}, Y = {c,d,c,d}: the empirical joint is uniform on 4 cells.
        const GramMatrix x = gram_matrix(column_of({0, 0, 1, 1}), KernelSpec::partition());
        const GramMatrix y = gram_matrix(column_of({0, 1, 0, 1}), KernelSpec::partition());
        const std::vector<GramMatrix> mats{x, y};
        const double expected = oracle::shannon_joint_entropy({0, 0, 1, 1}, {0, 1, 0, 1});
        CHECK(expected == Catch::Approx(2.0));
        CHECK(joint_entropy(mats, 1.01).bits == Catch::Approx(expected).margin(1e-9));
    }
    SECTION("size mismatch rejected") {
        const GramMatrix a = gram_matrix(column_of({0, 1}), KernelSpec::partition());
        const GramMatrix b = gram_matrix(column_of({0, 1, 2}), KernelSpec::partition());
        const std::vector<GramMatrix> mats{a, b};
        CHECK_THROWS_AS(joint_entropy(mats, 1.01), InputError);
    }
    SECTION("factor order does not matter") {
        std::mt19937_64 rng(11);
        const std::vector<int> sx = sample_discrete({0.4, 0.3, 0.3}, 40, rng);
        const std::vector<int> sy = sample_discrete({0.7, 0.3}, 40, rng);
        const std::vector<int> sz = sample_discrete({0.2, 0.5, 0.3}, 40, rng);
        const GramMatrix x = gram_matrix(column_of(sx), KernelSpec::partition());
        const GramMatrix y = gram_matrix(column_of(sy), KernelSpec::partition());
        const GramMatrix z = gram_matrix(column_of(sz), KernelSpec::partition());
        const std::vector<GramMatrix> xyz{x, y, z};
        const std::vector<GramMatrix> zyx{z, y, x};
        CHECK(joint_entropy(xyz, 1.01).bits ==
              Catch::Approx(joint_entropy(zyx, 1.01).bits).margin(1e-10));
    }
}

TEST_CASE("cmi matches the Shannon conditional mutual information") {
    std::mt19937_64 rng(20240812);
    const int n = 256;
    // Markov chain A -> C -> B over small alphabets.
    std::uniform_int_distribution<int> a_dist(0, 3);
    std::uniform_int_distribution<int> noise(0, 1);
    oracle::Column a_col(n), b_col(n), c_col(n);
    for (int i = 0; i < n; ++i) {
        a_col[static_cast<std::size_t>(i)] = a_dist(rng);
        c_col[static_cast<std::size_t>(i)] = (a_col[static_cast<std::size_t>(i)] + noise(rng)) % 4;
        b_col[static_cast<std::size_t>(i)] = (c_col[static_cast<std::size_t>(i)] + noise(rng)) % 4;
    }
    const GramMatrix ga = gram_matrix(column_of(a_col), KernelSpec::partition());
    const GramMatrix gb = gram_matrix(column_of(b_col), KernelSpec::partition());
    const GramMatrix gc = gram_matrix(column_of(c_col), KernelSpec::partition());

    const std::vector<GramMatrix> c_set{gc};
    const std::vector<GramMatrix> a_set{ga};
    const double estimated = cmi(c_set, gb, a_set, 1.01);
    const double expected = oracle::shannon_cmi(c_col, b_col, a_col);
    CHECK(estimated == Catch::Approx(expected).margin(0.05));
}

TEST_CASE("cmi with identical condition and target sets is exactly zero") {
    std::mt19937_64 rng(99);
    const std::vector<int> samples = sample_discrete({0.3, 0.3, 0.4}, 80, rng);
    const std::vector<int> labels = sample_discrete({0.5, 0.5}, 80, rng);
    const GramMatrix x = gram_matrix(column_of(samples), KernelSpec::partition());
    const GramMatrix y = gram_matrix(column_of(labels), KernelSpec::partition());
    const std::vector<GramMatrix> set{x};
    CHECK(cmi(set, y, set, 1.01) == 0.0);
}

TEST_CASE("cmi of an independent target stays near zero") {
    std::mt19937_64 rng(123);
    const int n = 256;
    oracle::Column a_col(n), b_col(n), c_col(n);
    std::uniform_int_distribution<int> sym(0, 3);
    for (int i = 0; i < n; ++i) {
        a_col[static_cast<std::size_t>(i)] = sym(rng);
        c_col[static_cast<std::size_t>(i)] = sym(rng);
        b_col[static_cast<std::size_t>(i)] = sym(rng);  // independent of everything
    }
    const GramMatrix ga = gram_matrix(column_of(a_col), KernelSpec::partition());
    const GramMatrix gb = gram_matrix(column_of(b_col), KernelSpec::partition());
    const GramMatrix gc = gram_matrix(column_of(c_col), KernelSpec::partition());
    const std::vector<GramMatrix> c_set{gc};
    const std::vector<GramMatrix> a_set{ga};
    CHECK(cmi(c_set, gb, a_set, 1.01) <= 0.05);
}

TEST_CASE("activation_gram") {
    SECTION("constant column is rank one with zero entropy") {
        Eigen::MatrixXd acts = Eigen::MatrixXd::Constant(20, 1, 0.42);
        const std::vector<GramMatrix> grams = activation_gram(acts);
        REQUIRE(grams.size() == 1);
        CHECK(renyi_entropy(grams[0], 1.01).bits == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("identical columns give equal matrices") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> dist(0.0, 1.0);
        Eigen::MatrixXd acts(30, 2);
        for (int i = 0; i < 30; ++i) {
            acts(i, 0) = dist(rng);
            acts(i, 1) = acts(i, 0);
        }
        const std::vector<GramMatrix> grams = activation_gram(acts);
        REQUIRE(grams.size() == 2);
        CHECK((grams[0].data - grams[1].data).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("joint entropy dominates each marginal") {
        std::mt19937_64 rng(6);
        std::normal_distribution<double> dist(0.0, 1.0);
        Eigen::MatrixXd acts(40, 3);
        for (int i = 0; i < 40; ++i) {
            for (int c = 0; c < 3; ++c) acts(i, c) = dist(rng);
        }
        const std::vector<GramMatrix> grams = activation_gram(acts);
        const double joint = joint_entropy(std::span<const GramMatrix>(grams), 1.01).bits;
        for (const GramMatrix& g : grams) {
            CHECK(joint >= renyi_entropy(g, 1.01).bits - 1e-6);
        }
    }
}

TEST_CASE("entropy bounds hold for random gram matrices") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 16 + trial * 7;
        Eigen::MatrixXd samples(n, 2);
        for (int i = 0; i < n; ++i) {
            samples(i, 0) = dist(rng);
            samples(i, 1) = dist(rng);
        }
        const GramMatrix a = gram_matrix(samples, KernelSpec::gaussian(0.8));
        validate_gram(a);
        const double bits = renyi_entropy(a, 1.01).bits;
        CHECK(bits >= -1e-6);
        CHECK(bits <= std::log2(n) + 1e-6);
    }
}

TEST_CASE("label_gram encodes exact label equality") {
    const std::vector<int> labels{0, 1, 0, 2};
    const GramMatrix g = label_gram(std::span<const int>(labels));
    CHECK(g.data(0, 2) == Catch::Approx(0.25));
    CHECK(g.data(0, 1) == 0.0);
    CHECK(g.data(3, 3) == Catch::Approx(0.25));
    validate_gram(g);
}
