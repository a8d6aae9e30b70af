#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "partdet/deformation.hpp"
#include "partdet/nn.hpp"

namespace partdet {

enum class VisibilityMode : int { kHierarchical = 0, kLogistic = 1 };

// Classifier over the eight part scores.
//
// Logistic mode is a plain sigmoid readout, y = sigmoid(w . s + b); it also
// serves as the score head while the part layers are being trained.
//
// Hierarchical mode assigns one hidden unit per part, wired level by level:
//   level 1:  h_j = sigmoid(g1_j s_j + b1_j)
//   level l+1: h_j = sigmoid(sum_i h_i^l W_l[i][j] + g_j s_j + b_j)
//   output:   y = sigmoid(h^3 . w_out + b_out)
// so a deeper unit sees its own part's evidence together with the inferred
// reliability of the shallower parts.
template <typename T>
struct VisibilityParams {
    VisibilityMode mode = VisibilityMode::kHierarchical;
    std::array<std::vector<int>, 3> levels;  // 0-based part indices per level

    // logistic mode
    std::vector<T> w;  // [kPartCount]
    T b = T(0);

    // hierarchical mode
    std::array<std::vector<T>, 3> g;     // score-injection weights per level
    std::array<std::vector<T>, 3> bias;  // hidden biases per level
    std::array<std::vector<T>, 2> inter; // inter-level weights, row-major [i][j]
    std::vector<T> out_w;                // over level-3 hidden units
    T out_b = T(0);

    static std::array<std::vector<int>, 3> levels_from(const std::vector<PartSpec>& specs) {
        std::array<std::vector<int>, 3> lv;
        for (std::size_t i = 0; i < specs.size(); ++i)
            lv[static_cast<std::size_t>(specs[i].level - 1)].push_back(static_cast<int>(i));
        for (const auto& l : lv)
            if (l.empty()) throw std::invalid_argument("visibility: every level needs at least one part");
        return lv;
    }

    static VisibilityParams make(VisibilityMode mode, const std::vector<PartSpec>& specs) {
        VisibilityParams p;
        p.mode = mode;
        p.levels = levels_from(specs);
        if (mode == VisibilityMode::kLogistic) {
            p.w.assign(specs.size(), T(0));
        } else {
            for (int l = 0; l < 3; ++l) {
                p.g[static_cast<std::size_t>(l)].assign(p.levels[static_cast<std::size_t>(l)].size(), T(0));
                p.bias[static_cast<std::size_t>(l)].assign(p.levels[static_cast<std::size_t>(l)].size(), T(0));
            }
            p.inter[0].assign(p.levels[0].size() * p.levels[1].size(), T(0));
            p.inter[1].assign(p.levels[1].size() * p.levels[2].size(), T(0));
            p.out_w.assign(p.levels[2].size(), T(0));
        }
        return p;
    }

    template <typename U>
    VisibilityParams<U> cast() const {
        VisibilityParams<U> o;
        o.mode = mode;
        o.levels = levels;
        o.w.assign(w.begin(), w.end());
        o.b = static_cast<U>(b);
        for (int l = 0; l < 3; ++l) {
            o.g[static_cast<std::size_t>(l)].assign(g[static_cast<std::size_t>(l)].begin(),
                                                    g[static_cast<std::size_t>(l)].end());
            o.bias[static_cast<std::size_t>(l)].assign(bias[static_cast<std::size_t>(l)].begin(),
                                                       bias[static_cast<std::size_t>(l)].end());
        }
        o.inter[0].assign(inter[0].begin(), inter[0].end());
        o.inter[1].assign(inter[1].begin(), inter[1].end());
        o.out_w.assign(out_w.begin(), out_w.end());
        o.out_b = static_cast<U>(out_b);
        return o;
    }
};

template <typename T>
struct VisibilityCache {
    std::array<T, kPartCount> scores{};
    std::array<std::vector<T>, 3> hidden;  // per level
    T y_hat = T(0);
    bool valid = false;
};

template <typename T>
T visibility_forward(const std::array<T, kPartCount>& scores, const VisibilityParams<T>& params,
                     VisibilityCache<T>& cache) {
    for (T s : scores)
        if (!std::isfinite(static_cast<double>(s))) throw EvaluationError("visibility: non-finite part score");
    cache.scores = scores;

    if (params.mode == VisibilityMode::kLogistic) {
        T z = params.b;
        for (std::size_t j = 0; j < params.w.size(); ++j) z += params.w[j] * scores[j];
        cache.y_hat = sigmoid(z);
        cache.valid = true;
        return cache.y_hat;
    }

    for (int l = 0; l < 3; ++l) {
        const auto& idx = params.levels[static_cast<std::size_t>(l)];
        auto& h = cache.hidden[static_cast<std::size_t>(l)];
        h.assign(idx.size(), T(0));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            T z = params.g[static_cast<std::size_t>(l)][j] * scores[static_cast<std::size_t>(idx[j])] +
                  params.bias[static_cast<std::size_t>(l)][j];
            if (l > 0) {
                const auto& prev = cache.hidden[static_cast<std::size_t>(l - 1)];
                const auto& w = params.inter[static_cast<std::size_t>(l - 1)];
                for (std::size_t i = 0; i < prev.size(); ++i) z += prev[i] * w[i * idx.size() + j];
            }
            h[j] = sigmoid(z);
        }
    }
    T z = params.out_b;
    for (std::size_t j = 0; j < params.out_w.size(); ++j) z += params.out_w[j] * cache.hidden[2][j];
    cache.y_hat = sigmoid(z);
    cache.valid = true;
    return cache.y_hat;
}

// Exact gradients of the loss w.r.t. every visibility parameter and all
// eight part scores, given dL/dy_hat. Parameter gradients accumulate into
// d_params (shaped like params); score gradients accumulate into d_scores.
template <typename T>
void visibility_backward(T d_yhat, const VisibilityParams<T>& params, const VisibilityCache<T>& cache,
                         VisibilityParams<T>& d_params, std::array<T, kPartCount>& d_scores) {
    if (!cache.valid) throw InternalError("visibility_backward: forward cache missing");
    T dz_out = d_yhat * cache.y_hat * (T(1) - cache.y_hat);

    if (params.mode == VisibilityMode::kLogistic) {
        d_params.b += dz_out;
        for (std::size_t j = 0; j < params.w.size(); ++j) {
            d_params.w[j] += dz_out * cache.scores[j];
            d_scores[j] += dz_out * params.w[j];
        }
        return;
    }

    std::array<std::vector<T>, 3> dh;
    for (int l = 0; l < 3; ++l)
        dh[static_cast<std::size_t>(l)].assign(cache.hidden[static_cast<std::size_t>(l)].size(), T(0));

    d_params.out_b += dz_out;
    for (std::size_t j = 0; j < params.out_w.size(); ++j) {
        d_params.out_w[j] += dz_out * cache.hidden[2][j];
        dh[2][j] += dz_out * params.out_w[j];
    }

    for (int l = 2; l >= 0; --l) {
        const auto& idx = params.levels[static_cast<std::size_t>(l)];
        for (std::size_t j = 0; j < idx.size(); ++j) {
            T h = cache.hidden[static_cast<std::size_t>(l)][j];
            T dz = dh[static_cast<std::size_t>(l)][j] * h * (T(1) - h);
            d_params.g[static_cast<std::size_t>(l)][j] += dz * cache.scores[static_cast<std::size_t>(idx[j])];
            d_params.bias[static_cast<std::size_t>(l)][j] += dz;
            d_scores[static_cast<std::size_t>(idx[j])] += dz * params.g[static_cast<std::size_t>(l)][j];
            if (l > 0) {
                const auto& prev = cache.hidden[static_cast<std::size_t>(l - 1)];
                const auto& w = params.inter[static_cast<std::size_t>(l - 1)];
                auto& dw = d_params.inter[static_cast<std::size_t>(l - 1)];
                for (std::size_t i = 0; i < prev.size(); ++i) {
                    dw[i * idx.size() + j] += dz * prev[i];
                    dh[static_cast<std::size_t>(l - 1)][i] += dz * w[i * idx.size() + j];
                }
            }
        }
    }
}

}  // namespace partdet
