#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "iterseg/labeling.hpp"

using namespace iterseg;

namespace {

// Independent naive enumerator: recomputes the two-point distribution inline
// and scans all start labels without sharing code with the implementation.
std::vector<int> naive_refine(const std::vector<double>& values) {
    const int k = static_cast<int>(values.size());
    double best = -1;
    int best_s = 1;
    for (int s = 1; s <= 25 - k; ++s) {
        double total = 0;
        for (int m = 0; m < k; ++m) {
            const int label = s + m;
            const double v = values[m];
            const int fl = static_cast<int>(std::floor(v));
            double mass = 0;
            if (label == fl) mass = 1.0 - (v - fl);
            if (label == fl + 1) mass = v - fl;
            if (label < 1 || label > 24) mass = 0;
            total += mass;
        }
        if (total / k > best) {
            best = total / k;
            best_s = s;
        }
    }
    std::vector<int> out(k);
    for (int m = 0; m < k; ++m) out[m] = best_s + m;
    return out;
}

double sequence_likelihood(const std::vector<double>& values, int start) {
    double total = 0;
    for (std::size_t m = 0; m < values.size(); ++m)
        total += regression_to_distribution(values[m]).mass(start + static_cast<int>(m));
    return total / static_cast<double>(values.size());
}

}  // namespace

TEST_CASE("regression value 22.8 splits 20/80 between labels 22 and 23", "[labeling]") {
    auto d = regression_to_distribution(22.8);
    CHECK(d.mass(22) == Catch::Approx(0.2).margin(1e-12));
    CHECK(d.mass(23) == Catch::Approx(0.8).margin(1e-12));
    CHECK(d.mass(21) == 0.0);
    CHECK(d.mass(24) == 0.0);
}

TEST_CASE("integer regression values concentrate all mass on one label", "[labeling]") {
    auto d = regression_to_distribution(7.0);
    CHECK(d.mass(7) == 1.0);
    CHECK(d.support.size() == 1);
}

TEST_CASE("mass beyond the label range is dropped without renormalization", "[labeling]") {
    auto d = regression_to_distribution(24.6);
    CHECK(d.mass(24) == Catch::Approx(0.4).margin(1e-12));
    CHECK(d.support.size() == 1);

    auto low = regression_to_distribution(0.3);
    CHECK(low.mass(1) == Catch::Approx(0.3).margin(1e-12));
    CHECK(low.support.size() == 1);

    auto zero = regression_to_distribution(0.0);
    CHECK(zero.support.empty());
}

TEST_CASE("worked three-instance example picks 22,23,24", "[labeling]") {
    const std::vector<double> values{21.9, 23.0, 24.1};
    auto labels = refine_labels(values);
    CHECK(labels == std::vector<int>{22, 23, 24});
    CHECK(sequence_likelihood(values, 22) == Catch::Approx((0.9 + 1.0 + 0.9) / 3).margin(1e-12));
}

TEST_CASE("a full chain of 24 instances has only one possible labeling", "[labeling]") {
    std::vector<double> values(24, 11.5);  // nonsense values; sequence is forced
    auto labels = refine_labels(values);
    for (int m = 0; m < 24; ++m) CHECK(labels[m] == m + 1);
}

TEST_CASE("exact contiguous integer inputs are returned unchanged", "[labeling]") {
    const std::vector<double> values{5, 6, 7, 8};
    CHECK(refine_labels(values) == std::vector<int>{5, 6, 7, 8});
}

TEST_CASE("too many instances raise invalid-argument", "[labeling]") {
    std::vector<double> values(25, 1.0);
    CHECK_THROWS_AS(refine_labels(values), std::invalid_argument);
    CHECK_THROWS_AS(refine_labels({}), std::invalid_argument);
}

TEST_CASE("refinement matches the naive enumerator on 1000 random cases", "[labeling]") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 1 + static_cast<int>(rng() % 24);
        std::vector<double> values(k);
        // noisy near-contiguous ramps, occasionally wild
        const double base = std::ldexp(static_cast<double>(rng() >> 11), -53) * 24.0;
        for (int m = 0; m < k; ++m) {
            const double noise = (std::ldexp(static_cast<double>(rng() >> 11), -53) - 0.5) * 3.0;
            values[m] = std::max(0.0, base + m + noise);
        }
        CHECK(refine_labels(values) == naive_refine(values));
    }
}

TEST_CASE("returned sequence maximizes the likelihood", "[labeling]") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 200; ++trial) {
        const int k = 1 + static_cast<int>(rng() % 10);
        std::vector<double> values(k);
        for (int m = 0; m < k; ++m)
            values[m] = std::ldexp(static_cast<double>(rng() >> 11), -53) * 25.0;
        auto labels = refine_labels(values);
        CHECK(labels.front() >= 1);
        CHECK(labels.back() <= 24);
        for (int m = 1; m < k; ++m) CHECK(labels[m] == labels[m - 1] + 1);
        const double got = sequence_likelihood(values, labels.front());
        for (int s = 1; s <= 25 - k; ++s) CHECK(got >= sequence_likelihood(values, s) - 1e-12);
    }
}

TEST_CASE("integer shifts of the inputs shift the result accordingly", "[labeling]") {
    const std::vector<double> values{9.8, 11.1, 11.9};
    auto base = refine_labels(values);
    std::vector<double> shifted;
    for (double v : values) shifted.push_back(v + 3.0);
    auto moved = refine_labels(shifted);
    CHECK(moved.front() == base.front() + 3);
}
