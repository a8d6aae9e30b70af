#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "partdet/network.hpp"

namespace partdet {

struct GradCheckOptions {
    double epsilon = 1e-5;
    int per_group = 20;        // probes per parameter group (deformation coefficients: all)
    double tie_factor = 10.0;  // skip max-path probes when an argmax margin is below tie_factor * epsilon
    int threads = 1;
    std::uint64_t probe_seed = 0x51ed2701;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_group;
    std::size_t probes_checked = 0;
    std::size_t probes_skipped_ties = 0;
    double min_gap = std::numeric_limits<double>::max();
    std::vector<std::pair<std::string, double>> group_max;  // per-group max relative error
};

namespace detail {

inline double rel_error(double a, double b) {
    double denom = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) / denom;
}

}  // namespace detail

// Central finite differences against the analytic gradient, in the caller's
// precision (double intended). Probes a deterministic subsample of each
// parameter group plus every deformation coefficient. Groups upstream of the
// deformation argmax are skipped when any part's top-two margin is within
// tie_factor * epsilon, since the finite step can then cross an argmax
// switch that the gated analytic gradient deliberately ignores.
inline GradCheckResult grad_check(NetworkParams<double>& params, const std::vector<Sample<double>>& batch,
                                  const GradCheckOptions& opts = {}) {
    if (batch.empty()) throw std::invalid_argument("grad_check: empty batch");
    if (opts.epsilon < 1e-6 || opts.epsilon > 1e-3)
        throw std::invalid_argument("grad_check: epsilon outside [1e-6, 1e-3]");

    const double n_inv = 1.0 / static_cast<double>(batch.size());
    GradCheckResult result;

    // analytic pass: mean gradient, cached pooled features, argmax margins
    Network<double> net(params);
    NetworkParams<double> grads = NetworkParams<double>::make(params.arch);
    NetworkParams<double> sample_grad = NetworkParams<double>::make(params.arch);
    std::vector<Tensor3<double>> pooled_cache;
    pooled_cache.reserve(batch.size());
    {
        ForwardCache<double> cache;
        for (const Sample<double>& s : batch) {
            double y_hat = net.forward(s.input, cache);
            result.min_gap = std::min(result.min_gap, net.min_gap(cache));
            sample_grad.zero();
            net.backward(cache, bce_loss_dyhat(y_hat, s.label), sample_grad);
            auto src = sample_grad.groups();
            auto dst = grads.groups();
            for (std::size_t g = 0; g < src.size(); ++g)
                for (std::size_t j = 0; j < src[g].size; ++j) dst[g].data[j] += src[g].data[j] * n_inv;
            pooled_cache.push_back(cache.pooled);
        }
    }

    // probe plan
    struct Probe {
        std::size_t group;
        std::size_t index;
        double analytic;
        bool needs_conv1;
    };
    std::vector<Probe> probes;
    auto group_views = params.groups();
    auto grad_views = grads.groups();
    bool tie_flagged = result.min_gap <= opts.tie_factor * opts.epsilon;
    for (std::size_t g = 0; g < group_views.size(); ++g) {
        const auto& view = group_views[g];
        bool is_conv1 = view.name.rfind("conv1", 0) == 0;
        bool upstream_of_max = params.arch.has_parts() && view.name.rfind("vis_", 0) != 0;
        bool is_coeffs = view.name.size() > 2 && view.name.compare(view.name.size() - 2, 2, "_c") == 0;
        bool take_all = view.size <= static_cast<std::size_t>(opts.per_group) || is_coeffs;
        std::vector<std::size_t> indices;
        if (take_all) {
            indices.resize(view.size);
            std::iota(indices.begin(), indices.end(), std::size_t{0});
        } else {
            Rng rng(opts.probe_seed ^ fnv1a64(view.name));
            std::vector<std::size_t> all(view.size);
            std::iota(all.begin(), all.end(), std::size_t{0});
            for (int i = 0; i < opts.per_group; ++i) {
                int j = rng.uniform_int(i, static_cast<int>(all.size()) - 1);
                std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
                indices.push_back(all[static_cast<std::size_t>(i)]);
            }
        }
        for (std::size_t idx : indices) {
            if (tie_flagged && upstream_of_max) {
                ++result.probes_skipped_ties;
                continue;
            }
            probes.push_back({g, idx, grad_views[g].data[idx], is_conv1});
        }
    }

    // numeric pass, parallel over probes; each worker perturbs its own copy
    std::vector<double> rel_errors(probes.size(), 0.0);
    int workers = std::max(1, std::min(opts.threads, static_cast<int>(probes.size())));
    std::vector<std::thread> pool;
    std::size_t chunk = (probes.size() + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    auto run_range = [&](std::size_t lo, std::size_t hi) {
        NetworkParams<double> local = params;
        auto views = local.groups();
        ForwardCache<double> cache;
        auto loss_at = [&](const Probe& pr) {
            Network<double> lnet(local);
            double total = 0.0;
            for (std::size_t s = 0; s < batch.size(); ++s) {
                double y_hat = pr.needs_conv1 ? lnet.forward(batch[s].input, cache)
                                              : lnet.forward_from_pooled(pooled_cache[s], cache);
                total += bce_loss(y_hat, batch[s].label);
            }
            return total * n_inv;
        };
        for (std::size_t i = lo; i < hi; ++i) {
            const Probe& pr = probes[i];
            double* slot = views[pr.group].data + pr.index;
            double saved = *slot;
            *slot = saved + opts.epsilon;
            double up = loss_at(pr);
            *slot = saved - opts.epsilon;
            double down = loss_at(pr);
            *slot = saved;
            double numeric = (up - down) / (2.0 * opts.epsilon);
            rel_errors[i] = detail::rel_error(pr.analytic, numeric);
        }
    };
    if (workers == 1) {
        run_range(0, probes.size());
    } else {
        for (int t = 0; t < workers; ++t) {
            std::size_t lo = static_cast<std::size_t>(t) * chunk;
            std::size_t hi = std::min(probes.size(), lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // reduce
    result.probes_checked = probes.size();
    std::vector<double> group_max(group_views.size(), 0.0);
    for (std::size_t i = 0; i < probes.size(); ++i) {
        group_max[probes[i].group] = std::max(group_max[probes[i].group], rel_errors[i]);
        if (rel_errors[i] > result.max_rel_error) {
            result.max_rel_error = rel_errors[i];
            result.worst_group = group_views[probes[i].group].name;
        }
    }
    for (std::size_t g = 0; g < group_views.size(); ++g)
        result.group_max.emplace_back(group_views[g].name, group_max[g]);
    return result;
}

}  // namespace partdet
