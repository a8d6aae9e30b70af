#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "partdet/tensor.hpp"

namespace partdet {

namespace detail {
inline constexpr double kPi = 3.14159265358979323846;
}

// One raw (un-normalized) Gabor patch: oriented cosine carrier under a
// Gaussian envelope, sampled on an f_h x f_w grid centered on the patch.
//   u' =  u cos(theta) + v sin(theta),  v' = -u sin(theta) + v cos(theta)
//   g(u,v) = exp(-(u'^2 + gamma^2 v'^2) / (2 sigma^2)) * cos(2 pi u'/lambda + psi)
// Sign convention: g(theta + pi) == g(theta) for psi = 0 and
// g(theta + pi) == -g(theta) for psi = pi/2 (the carrier argument flips sign).
inline Map2<double> gabor_patch(double theta, double lambda, double sigma, double gamma, double psi, int f_h,
                                int f_w) {
    Map2<double> out(f_h, f_w);
    double cy = 0.5 * (f_h - 1);
    double cx = 0.5 * (f_w - 1);
    double ct = std::cos(theta);
    double st = std::sin(theta);
    for (int r = 0; r < f_h; ++r) {
        double u = r - cy;
        for (int c = 0; c < f_w; ++c) {
            double v = c - cx;
            double up = u * ct + v * st;
            double vp = -u * st + v * ct;
            double envelope = std::exp(-(up * up + gamma * gamma * vp * vp) / (2.0 * sigma * sigma));
            out.at(r, c) = envelope * std::cos(2.0 * detail::kPi * up / lambda + psi);
        }
    }
    return out;
}

// Deterministic Gabor filter bank used to initialize the first convolution.
// The grid is 8 orientations x (count/16) wavelengths x 2 phases; count must
// factor accordingly. Each patch is replicated across the input channels,
// then the whole filter is shifted to zero mean and scaled to unit L2 norm.
template <typename T = double>
FilterBank<T> gabor_bank(int count, int f_h, int f_w, int in_channels) {
    constexpr int kOrientations = 8;
    constexpr int kPhases = 2;
    if (count < kOrientations * kPhases || count % (kOrientations * kPhases) != 0)
        throw std::invalid_argument("gabor_bank: count must be a positive multiple of 16");
    int scales = count / (kOrientations * kPhases);

    FilterBank<T> bank(count, in_channels, f_h, f_w);
    int k = 0;
    for (int s = 0; s < scales; ++s) {
        double lambda = 2.5 * std::pow(1.4, s);
        double sigma = 0.56 * lambda;
        for (int p = 0; p < kPhases; ++p) {
            double psi = p == 0 ? 0.0 : detail::kPi / 2.0;
            for (int o = 0; o < kOrientations; ++o, ++k) {
                double theta = o * detail::kPi / kOrientations;
                Map2<double> patch = gabor_patch(theta, lambda, sigma, 0.5, psi, f_h, f_w);

                std::size_t plane_n = static_cast<std::size_t>(f_h) * f_w;
                std::vector<double> filter(static_cast<std::size_t>(in_channels) * plane_n);
                for (int c = 0; c < in_channels; ++c)
                    for (std::size_t i = 0; i < plane_n; ++i) filter[c * plane_n + i] = patch.v[i];

                double mean = 0.0;
                for (double x : filter) mean += x;
                mean /= static_cast<double>(filter.size());
                double norm_sq = 0.0;
                for (double& x : filter) {
                    x -= mean;
                    norm_sq += x * x;
                }
                double inv_norm = 1.0 / std::sqrt(norm_sq);
                T* dst = bank.filter(k);
                for (std::size_t i = 0; i < filter.size(); ++i) dst[i] = static_cast<T>(filter[i] * inv_norm);
            }
        }
    }
    return bank;
}

}  // namespace partdet
