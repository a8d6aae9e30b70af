#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "partdet/params.hpp"

namespace partdet {

// Per-sample intermediate state kept by the forward pass for the backward
// pass. Reused across samples to avoid reallocation.
template <typename T>
struct ForwardCache {
    Tensor3<T> input;      // 3x84x28
    Tensor3<T> conv1_act;  // 64x76x20, after tanh
    Tensor3<T> pooled;     // 64x19x5

    // stage 1
    T head_z = T(0);

    // stage >= 2
    std::vector<Map2<T>> part_maps;          // M_p
    std::array<T, kPartCount> scores{};      // s_p
    std::array<GridLoc, kPartCount> locs{};  // argmax of B_p
    std::array<T, kPartCount> gaps{};        // s_p minus the runner-up cell
    VisibilityCache<T> vis;

    T y_hat = T(0);
};

struct BackwardOpts {
    bool into_conv1 = true;  // accumulate conv1 gradients (and propagate below the pooled maps)
    bool into_parts = true;  // accumulate part filter / deformation gradients and below
};

// Stateless evaluator bound to one parameter set. Precomputes the quadratic
// deformation bases, which depend only on the part geometry.
template <typename T>
class Network {
public:
    explicit Network(const NetworkParams<T>& params) : params_(&params) {
        if (params.arch.has_parts() && params.arch.deform_mode == DeformationMode::kQuadratic) {
            bases_.reserve(params.parts.specs.size());
            for (const PartSpec& s : params.parts.specs)
                bases_.push_back(quadratic_basis<T>(s.map_h(), s.map_w(), s.anchor_x, s.anchor_y));
        }
    }

    const NetworkParams<T>& params() const { return *params_; }
    const std::vector<DeformationBasis<T>>& bases() const { return bases_; }

    // Full forward pass; returns y_hat.
    T forward(const Tensor3<T>& input, ForwardCache<T>& cache) const {
        cache.input = input;
        Tensor3<T> pre = conv2d_valid(input, params_->conv1);
        tanh_inplace(pre);
        cache.conv1_act = std::move(pre);
        cache.pooled = avg_pool_boxcar(cache.conv1_act);
        return forward_from_pooled(cache.pooled, cache);
    }

    // Forward pass from cached pooled features; cache.pooled must hold them.
    // Used when only parameters above the pooling layer changed.
    T forward_from_pooled(const Tensor3<T>& pooled, ForwardCache<T>& cache) const {
        if (&cache.pooled != &pooled) cache.pooled = pooled;
        const NetworkParams<T>& p = *params_;
        if (p.arch.stage == Stage::kStage1) {
            T z = p.head_b;
            const T* f = cache.pooled.v.data();
            for (std::size_t i = 0; i < p.head_w.size(); ++i) z += p.head_w[i] * f[i];
            cache.head_z = z;
            cache.y_hat = sigmoid(z);
            return cache.y_hat;
        }

        cache.part_maps = part_detection_maps(cache.pooled, p.parts);
        for (std::size_t i = 0; i < cache.part_maps.size(); ++i) {
            Map2<T> b;
            if (p.arch.deform_mode == DeformationMode::kQuadratic) {
                b = summed_map(cache.part_maps[i], p.parts.coeffs[i], bases_[i]);
            } else {
                b = cache.part_maps[i];
                const Map2<T>& d = p.parts.learned_maps[i];
                for (int j = 0; j < b.size(); ++j) b.v[static_cast<std::size_t>(j)] += d.v[static_cast<std::size_t>(j)];
            }
            PartScore<T> s = part_score(b);
            cache.scores[i] = s.value;
            cache.locs[i] = s.loc;
            cache.gaps[i] = s.value - s.runner_up;
        }
        cache.y_hat = visibility_forward(cache.scores, p.vis, cache.vis);
        return cache.y_hat;
    }

    // Accumulates dLoss/dParams into `grads` given dLoss/dy_hat.
    void backward(const ForwardCache<T>& cache, T d_yhat, NetworkParams<T>& grads,
                  const BackwardOpts& opts = {}) const {
        const NetworkParams<T>& p = *params_;
        Tensor3<T> d_pooled(cache.pooled.c, cache.pooled.h, cache.pooled.w);
        bool need_pooled_grad = opts.into_conv1;

        if (p.arch.stage == Stage::kStage1) {
            T dz = d_yhat * cache.y_hat * (T(1) - cache.y_hat);
            grads.head_b += dz;
            const T* f = cache.pooled.v.data();
            for (std::size_t i = 0; i < p.head_w.size(); ++i) {
                grads.head_w[i] += dz * f[i];
                if (need_pooled_grad) d_pooled.v[i] = dz * p.head_w[i];
            }
        } else {
            std::array<T, kPartCount> d_scores{};
            visibility_backward(d_yhat, p.vis, cache.vis, grads.vis, d_scores);
            if (!opts.into_parts) return;

            for (std::size_t i = 0; i < p.parts.specs.size(); ++i) {
                T ds = d_scores[i];
                GridLoc loc = cache.locs[i];
                const Map2<T>& m = cache.part_maps[i];
                if (loc.x < 0 || loc.x >= m.h || loc.y < 0 || loc.y >= m.w)
                    throw InternalError("network backward: stale argmax location");

                if (p.arch.deform_mode == DeformationMode::kQuadratic) {
                    // dc_n = ds * d_n(loc)
                    auto& dc = grads.parts.coeffs[i];
                    for (int n = 0; n < 4; ++n)
                        dc[static_cast<std::size_t>(n)] += ds * bases_[i].value(n, loc.x, loc.y);
                } else {
                    grads.parts.learned_maps[i].at(loc.x, loc.y) += ds;
                }

                // dB_p is nonzero only at the winning cell, so the part-filter
                // convolution backward collapses to one filter-sized window.
                const FilterBank<T>& f = p.parts.filters[i];
                FilterBank<T>& df = grads.parts.filters[i];
                df.biases[0] += ds;
                for (int c = 0; c < f.in_channels; ++c) {
                    const T* ip = cache.pooled.plane(c) + loc.x * cache.pooled.w + loc.y;
                    T* dip = need_pooled_grad ? d_pooled.plane(c) + loc.x * d_pooled.w + loc.y : nullptr;
                    for (int fi = 0; fi < f.f_h; ++fi) {
                        for (int fj = 0; fj < f.f_w; ++fj) {
                            df.w_at(0, c, fi, fj) += ds * ip[fi * cache.pooled.w + fj];
                            if (dip) dip[fi * d_pooled.w + fj] += ds * f.w_at(0, c, fi, fj);
                        }
                    }
                }
            }
        }

        if (!opts.into_conv1) return;
        Tensor3<T> d_act(cache.conv1_act.c, cache.conv1_act.h, cache.conv1_act.w);
        avg_pool_boxcar_backward(d_pooled, d_act);
        tanh_backward_inplace(d_act, cache.conv1_act);
        conv2d_backward_filters(cache.input, d_act, grads.conv1);
    }

    // Smallest argmax margin over all parts; infinite for stage 1.
    T min_gap(const ForwardCache<T>& cache) const {
        if (params_->arch.stage == Stage::kStage1) return std::numeric_limits<T>::max();
        T g = std::numeric_limits<T>::max();
        for (T v : cache.gaps) g = std::min(g, v);
        return g;
    }

private:
    const NetworkParams<T>* params_;
    std::vector<DeformationBasis<T>> bases_;
};

template <typename T>
struct Sample {
    Tensor3<T> input;
    int label = 0;
};

// Mean loss and mean gradient over a minibatch. Per-sample gradients go into
// private slots and are reduced in sample-index order, so the result is
// independent of the worker count.
template <typename T>
class MiniBatchRunner {
public:
    // Mean loss; accumulated mean gradient is ADDED into grads after zeroing it.
    T loss_and_grad(const Network<T>& net, const std::vector<const Sample<T>*>& batch, NetworkParams<T>& grads,
                    const BackwardOpts& opts, int threads) {
        ensure_slots(net, batch.size());
        int n = static_cast<int>(batch.size());
        std::vector<T> losses(batch.size(), T(0));
        parallel_for(n, threads, [&](int i) {
            auto idx = static_cast<std::size_t>(i);
            const Sample<T>& s = *batch[idx];
            T y_hat = net.forward(s.input, caches_[idx]);
            losses[idx] = bce_loss(y_hat, s.label);
            grad_slots_[idx].zero();
            net.backward(caches_[idx], bce_loss_dyhat(y_hat, s.label), grad_slots_[idx], opts);
        });
        grads.zero();
        T inv = T(1) / static_cast<T>(n);
        auto dst = grads.groups();
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto src = grad_slots_[i].groups();
            for (std::size_t g = 0; g < dst.size(); ++g)
                for (std::size_t j = 0; j < dst[g].size; ++j) dst[g].data[j] += src[g].data[j] * inv;
        }
        T loss = T(0);
        for (T l : losses) loss += l;
        return loss * inv;
    }

    // Forward-only mean loss and accuracy at threshold 0.5.
    std::pair<T, double> loss_and_accuracy(const Network<T>& net, const std::vector<const Sample<T>*>& batch,
                                           int threads) {
        ensure_slots(net, batch.size());
        int n = static_cast<int>(batch.size());
        std::vector<T> losses(batch.size(), T(0));
        std::vector<int> correct(batch.size(), 0);
        parallel_for(n, threads, [&](int i) {
            auto idx = static_cast<std::size_t>(i);
            const Sample<T>& s = *batch[idx];
            T y_hat = net.forward(s.input, caches_[idx]);
            losses[idx] = bce_loss(y_hat, s.label);
            correct[idx] = (y_hat >= T(0.5)) == (s.label == 1) ? 1 : 0;
        });
        T loss = T(0);
        int ok = 0;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            loss += losses[i];
            ok += correct[i];
        }
        return {loss / static_cast<T>(n), static_cast<double>(ok) / n};
    }

private:
    void ensure_slots(const Network<T>& net, std::size_t n) {
        const Architecture& a = net.params().arch;
        if (!grad_slots_.empty() && (grad_slots_[0].arch.stage != a.stage ||
                                     grad_slots_[0].arch.deform_mode != a.deform_mode ||
                                     grad_slots_[0].arch.effective_vis_mode() != a.effective_vis_mode())) {
            grad_slots_.clear();
        }
        if (caches_.size() < n) caches_.resize(n);
        while (grad_slots_.size() < n) grad_slots_.push_back(NetworkParams<T>::make(a));
    }

    std::vector<ForwardCache<T>> caches_;
    std::vector<NetworkParams<T>> grad_slots_;
};

}  // namespace partdet
