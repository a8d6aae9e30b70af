#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace partdet {

// Error taxonomy. Argument-contract violations use std::invalid_argument;
// everything that can reach a user gets one of these.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or unsupported file content (PGM magic/depth, corpus layout).
struct FormatError : Error {
    using Error::Error;
};

// Unparsable text input; carries a line number where one exists.
struct ParseError : Error {
    using Error::Error;
};

// Bad configuration key/value or CLI usage.
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite loss or gradient during training.
struct TrainingDivergence : Error {
    using Error::Error;
};

// Non-finite value reached the classifier at inference time.
struct EvaluationError : Error {
    using Error::Error;
};

// Internal bookkeeping broke an invariant (stale cache, bad argmax record).
struct InternalError : Error {
    using Error::Error;
};

// Deterministic RNG. All draw algorithms are written out here so that the
// stream depends only on the seed, not on the standard library build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed == 0 ? 0x9e3779b97f4a7c15ull : seed) {
        for (int i = 0; i < 4; ++i) next_u64();  // decorrelate near-zero seeds
    }

    std::uint64_t next_u64() {
        // xorshift64* (Vigna); fixed algorithm, platform independent
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range; modulo bias is irrelevant at these range sizes
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Derived stream, useful for per-epoch shuffles.
    Rng fork(std::uint64_t stream) const {
        return Rng(state_ ^ (0xbf58476d1ce4e5b9ull * (stream + 0x100)));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(0, i);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used for the deterministic validation split.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Block partition,
// so callers that write to index-addressed slots stay deterministic.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads < 1) threads = 1;
    threads = std::min(threads, n);
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        int lo = t * chunk;
        int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace partdet
