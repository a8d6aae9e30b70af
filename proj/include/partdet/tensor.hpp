#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace partdet {

// 2-D map, row-major.
template <typename T>
struct Map2 {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Map2() = default;
    Map2(int h_, int w_, T fill = T(0)) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {
        if (h_ < 1 || w_ < 1) throw std::invalid_argument("Map2: dimensions must be >= 1");
    }

    T& at(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
    T at(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
    int size() const { return h * w; }

    template <typename U>
    Map2<U> cast() const {
        Map2<U> out;
        out.h = h;
        out.w = w;
        out.v.assign(v.begin(), v.end());
        return out;
    }
};

// 3-D tensor, channel-major then row-major.
template <typename T>
struct Tensor3 {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Tensor3() = default;
    Tensor3(int c_, int h_, int w_, T fill = T(0))
        : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {
        if (c_ < 1 || h_ < 1 || w_ < 1) throw std::invalid_argument("Tensor3: dimensions must be >= 1");
    }

    T& at(int ch, int r, int col) { return v[(static_cast<std::size_t>(ch) * h + r) * w + col]; }
    T at(int ch, int r, int col) const { return v[(static_cast<std::size_t>(ch) * h + r) * w + col]; }

    T* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * h * w; }
    const T* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * h * w; }

    std::size_t size() const { return v.size(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    template <typename U>
    Tensor3<U> cast() const {
        Tensor3<U> out;
        out.c = c;
        out.h = h;
        out.w = w;
        out.v.assign(v.begin(), v.end());
        return out;
    }
};

// K filters of shape in_channels x f_h x f_w plus one bias per filter.
template <typename T>
struct FilterBank {
    int count = 0;
    int in_channels = 0;
    int f_h = 0;
    int f_w = 0;
    std::vector<T> weights;  // [k][c][i][j]
    std::vector<T> biases;   // [k]

    FilterBank() = default;
    FilterBank(int k, int c, int fh, int fw)
        : count(k),
          in_channels(c),
          f_h(fh),
          f_w(fw),
          weights(static_cast<std::size_t>(k) * c * fh * fw, T(0)),
          biases(static_cast<std::size_t>(k), T(0)) {
        if (k < 1 || c < 1 || fh < 1 || fw < 1) throw std::invalid_argument("FilterBank: dimensions must be >= 1");
    }

    T& w_at(int k, int c, int i, int j) {
        return weights[((static_cast<std::size_t>(k) * in_channels + c) * f_h + i) * f_w + j];
    }
    T w_at(int k, int c, int i, int j) const {
        return weights[((static_cast<std::size_t>(k) * in_channels + c) * f_h + i) * f_w + j];
    }

    const T* filter(int k) const { return weights.data() + static_cast<std::size_t>(k) * in_channels * f_h * f_w; }
    T* filter(int k) { return weights.data() + static_cast<std::size_t>(k) * in_channels * f_h * f_w; }

    template <typename U>
    FilterBank<U> cast() const {
        FilterBank<U> out;
        out.count = count;
        out.in_channels = in_channels;
        out.f_h = f_h;
        out.f_w = f_w;
        out.weights.assign(weights.begin(), weights.end());
        out.biases.assign(biases.begin(), biases.end());
        return out;
    }
};

// Fixed geometry of the pipeline, forced by the input construction and the
// first two layers: 3x84x28 -> conv 9x9 -> 64x76x20 -> pool 4x4/4 -> 64x19x5.
inline constexpr int kInputChannels = 3;
inline constexpr int kInputH = 84;
inline constexpr int kInputW = 28;
inline constexpr int kConv1Filters = 64;
inline constexpr int kConv1Size = 9;
inline constexpr int kPoolSize = 4;
inline constexpr int kFeatureH = (kInputH - kConv1Size + 1) / kPoolSize;  // 19
inline constexpr int kFeatureW = (kInputW - kConv1Size + 1) / kPoolSize;  // 5
inline constexpr int kPartCount = 8;
inline constexpr int kWindowH = 40;   // scene-space detection window
inline constexpr int kWindowW = 100;

}  // namespace partdet
