#include <gtest/gtest.h>

#include <cmath>

#include "partdet/gabor.hpp"

using namespace partdet;

TEST(Gabor, BankHasZeroMeanUnitNormFilters) {
    FilterBank<double> bank = gabor_bank<double>(64, 9, 9, 3);
    ASSERT_EQ(bank.count, 64);
    std::size_t filter_len = static_cast<std::size_t>(bank.in_channels) * bank.f_h * bank.f_w;
    for (int k = 0; k < bank.count; ++k) {
        const double* w = bank.filter(k);
        double mean = 0.0, norm_sq = 0.0;
        for (std::size_t i = 0; i < filter_len; ++i) mean += w[i];
        mean /= static_cast<double>(filter_len);
        for (std::size_t i = 0; i < filter_len; ++i) norm_sq += w[i] * w[i];
        ASSERT_LT(std::abs(mean), 1e-9) << "filter " << k;
        ASSERT_LT(std::abs(std::sqrt(norm_sq) - 1.0), 1e-9) << "filter " << k;
        ASSERT_DOUBLE_EQ(bank.biases[static_cast<std::size_t>(k)], 0.0);
    }
}

TEST(Gabor, DeterministicConstruction) {
    FilterBank<double> a = gabor_bank<double>(64, 9, 9, 3);
    FilterBank<double> b = gabor_bank<double>(64, 9, 9, 3);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.biases, b.biases);
}

TEST(Gabor, RejectsIncompatibleCount) {
    EXPECT_THROW(gabor_bank<double>(50, 9, 9, 3), std::invalid_argument);
    EXPECT_THROW(gabor_bank<double>(8, 9, 9, 3), std::invalid_argument);
}

// Turning the orientation by pi keeps the cosine-phase patch and negates the
// sine-phase patch (the carrier argument flips sign under u' -> -u').
TEST(Gabor, OrientationPlusPiSignConvention) {
    const double pi = 3.14159265358979323846;
    for (double theta : {0.0, pi / 8, 3 * pi / 8, 5 * pi / 8}) {
        Map2<double> even_a = gabor_patch(theta, 3.5, 2.0, 0.5, 0.0, 9, 9);
        Map2<double> even_b = gabor_patch(theta + pi, 3.5, 2.0, 0.5, 0.0, 9, 9);
        Map2<double> odd_a = gabor_patch(theta, 3.5, 2.0, 0.5, pi / 2, 9, 9);
        Map2<double> odd_b = gabor_patch(theta + pi, 3.5, 2.0, 0.5, pi / 2, 9, 9);
        for (std::size_t i = 0; i < even_a.v.size(); ++i) {
            ASSERT_NEAR(even_a.v[i], even_b.v[i], 1e-12);
            ASSERT_NEAR(odd_a.v[i], -odd_b.v[i], 1e-12);
        }
    }
}

TEST(Gabor, ChannelsAreReplicated) {
    FilterBank<double> bank = gabor_bank<double>(64, 9, 9, 3);
    int plane = bank.f_h * bank.f_w;
    for (int k = 0; k < bank.count; k += 7) {
        for (int i = 0; i < plane; ++i) {
            ASSERT_DOUBLE_EQ(bank.w_at(k, 0, i / 9, i % 9), bank.w_at(k, 1, i / 9, i % 9));
            ASSERT_DOUBLE_EQ(bank.w_at(k, 0, i / 9, i % 9), bank.w_at(k, 2, i / 9, i % 9));
        }
    }
}
