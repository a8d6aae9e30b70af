#pragma once

#include <cmath>
#include <stdexcept>

#include "partdet/common.hpp"
#include "partdet/tensor.hpp"

namespace partdet {

// Valid cross-correlation: out[k](y,x) = b_k + sum_{c,i,j} in[c](y+i,x+j) * w[k,c,i,j].
// The "convolution" everywhere in this codebase is cross-correlation; kernels
// are never flipped.
template <typename T>
Tensor3<T> conv2d_valid(const Tensor3<T>& in, const FilterBank<T>& bank) {
    if (bank.in_channels != in.c) throw std::invalid_argument("conv2d_valid: channel mismatch");
    if (bank.f_h > in.h || bank.f_w > in.w) throw std::invalid_argument("conv2d_valid: filter larger than input");
    int out_h = in.h - bank.f_h + 1;
    int out_w = in.w - bank.f_w + 1;
    Tensor3<T> out(bank.count, out_h, out_w);
    for (int k = 0; k < bank.count; ++k) {
        T* op = out.plane(k);
        T b = bank.biases[static_cast<std::size_t>(k)];
        for (int i = 0; i < out_h * out_w; ++i) op[i] = b;
        for (int c = 0; c < in.c; ++c) {
            const T* ip = in.plane(c);
            for (int fi = 0; fi < bank.f_h; ++fi) {
                for (int fj = 0; fj < bank.f_w; ++fj) {
                    T wv = bank.w_at(k, c, fi, fj);
                    for (int y = 0; y < out_h; ++y) {
                        const T* irow = ip + (y + fi) * in.w + fj;
                        T* orow = op + y * out_w;
                        for (int x = 0; x < out_w; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates filter/bias gradients for conv2d_valid. d_bank must already be
// sized like the bank; values are added, not overwritten.
template <typename T>
void conv2d_backward_filters(const Tensor3<T>& in, const Tensor3<T>& d_out, FilterBank<T>& d_bank) {
    int out_h = d_out.h;
    int out_w = d_out.w;
    for (int k = 0; k < d_bank.count; ++k) {
        const T* dop = d_out.plane(k);
        T db = T(0);
        for (int i = 0; i < out_h * out_w; ++i) db += dop[i];
        d_bank.biases[static_cast<std::size_t>(k)] += db;
        for (int c = 0; c < d_bank.in_channels; ++c) {
            const T* ip = in.plane(c);
            for (int fi = 0; fi < d_bank.f_h; ++fi) {
                for (int fj = 0; fj < d_bank.f_w; ++fj) {
                    T acc = T(0);
                    for (int y = 0; y < out_h; ++y) {
                        const T* irow = ip + (y + fi) * in.w + fj;
                        const T* drow = dop + y * out_w;
                        for (int x = 0; x < out_w; ++x) acc += irow[x] * drow[x];
                    }
                    d_bank.w_at(k, c, fi, fj) += acc;
                }
            }
        }
    }
}

// Accumulates the input gradient of conv2d_valid into d_in (sized like in).
template <typename T>
void conv2d_backward_input(const FilterBank<T>& bank, const Tensor3<T>& d_out, Tensor3<T>& d_in) {
    int out_h = d_out.h;
    int out_w = d_out.w;
    for (int k = 0; k < bank.count; ++k) {
        const T* dop = d_out.plane(k);
        for (int c = 0; c < bank.in_channels; ++c) {
            T* dip = d_in.plane(c);
            for (int fi = 0; fi < bank.f_h; ++fi) {
                for (int fj = 0; fj < bank.f_w; ++fj) {
                    T wv = bank.w_at(k, c, fi, fj);
                    for (int y = 0; y < out_h; ++y) {
                        T* drow = dip + (y + fi) * d_in.w + fj;
                        const T* srow = dop + y * out_w;
                        for (int x = 0; x < out_w; ++x) drow[x] += wv * srow[x];
                    }
                }
            }
        }
    }
}

// Boxcar average pooling with equal window and stride; trailing rows/cols
// that do not fill a complete window are dropped.
template <typename T>
Tensor3<T> avg_pool_boxcar(const Tensor3<T>& in, int size = kPoolSize, int stride = kPoolSize) {
    if (size < 1 || stride < 1) throw std::invalid_argument("avg_pool_boxcar: size/stride must be >= 1");
    if (in.h < size || in.w < size) throw std::invalid_argument("avg_pool_boxcar: input smaller than pooling window");
    int out_h = (in.h - size) / stride + 1;
    int out_w = (in.w - size) / stride + 1;
    Tensor3<T> out(in.c, out_h, out_w);
    T inv = T(1) / static_cast<T>(size * size);
    for (int c = 0; c < in.c; ++c) {
        const T* ip = in.plane(c);
        T* op = out.plane(c);
        for (int y = 0; y < out_h; ++y) {
            for (int x = 0; x < out_w; ++x) {
                T acc = T(0);
                for (int i = 0; i < size; ++i) {
                    const T* row = ip + (y * stride + i) * in.w + x * stride;
                    for (int j = 0; j < size; ++j) acc += row[j];
                }
                op[y * out_w + x] = acc * inv;
            }
        }
    }
    return out;
}

// Distributes pooled gradients uniformly back over each window.
template <typename T>
void avg_pool_boxcar_backward(const Tensor3<T>& d_out, Tensor3<T>& d_in, int size = kPoolSize,
                              int stride = kPoolSize) {
    T inv = T(1) / static_cast<T>(size * size);
    for (int c = 0; c < d_out.c; ++c) {
        const T* dop = d_out.plane(c);
        T* dip = d_in.plane(c);
        for (int y = 0; y < d_out.h; ++y) {
            for (int x = 0; x < d_out.w; ++x) {
                T g = dop[y * d_out.w + x] * inv;
                for (int i = 0; i < size; ++i) {
                    T* row = dip + (y * stride + i) * d_in.w + x * stride;
                    for (int j = 0; j < size; ++j) row[j] += g;
                }
            }
        }
    }
}

// Hidden nonlinearity. Applied to the first convolution's output maps only;
// the part-score path stays linear so the deformation layer max-pools a sum
// of linear responses.
template <typename T>
void tanh_inplace(Tensor3<T>& t) {
    for (auto& x : t.v) x = std::tanh(x);
}

// d(tanh)/dz expressed through the cached activation a = tanh(z).
template <typename T>
void tanh_backward_inplace(Tensor3<T>& d_act, const Tensor3<T>& act) {
    for (std::size_t i = 0; i < d_act.v.size(); ++i) d_act.v[i] *= (T(1) - act.v[i] * act.v[i]);
}

template <typename T>
T sigmoid(T z) {
    if (z >= T(0)) {
        T e = std::exp(-z);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(z);
    return e / (T(1) + e);
}

inline constexpr double kProbEps = 1e-7;

template <typename T>
T clamp_prob(T p) {
    if (p < T(kProbEps)) return T(kProbEps);
    if (p > T(1) - T(kProbEps)) return T(1) - T(kProbEps);
    return p;
}

// Binary cross entropy, -(y log p + (1-y) log(1-p)), with p clamped away
// from {0, 1}.
template <typename T>
T bce_loss(T y_hat, int y) {
    T p = clamp_prob(y_hat);
    return y ? -std::log(p) : -std::log(T(1) - p);
}

// dL/dy_hat for bce_loss, evaluated at the clamped probability.
template <typename T>
T bce_loss_dyhat(T y_hat, int y) {
    T p = clamp_prob(y_hat);
    return y ? -T(1) / p : T(1) / (T(1) - p);
}

// Uniform init in +/- sqrt(6 / (fan_in + fan_out)).
template <typename T>
void init_uniform_xavier(T* data, std::size_t n, int fan_in, int fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<T>(rng.uniform(-bound, bound));
}

// One momentum-SGD update over a contiguous parameter span:
// v <- momentum * v - lr * g;  p <- p + v.
template <typename T>
void sgd_update_span(T* p, const T* g, T* vel, std::size_t n, T lr, T momentum) {
    for (std::size_t i = 0; i < n; ++i) {
        vel[i] = momentum * vel[i] - lr * g[i];
        p[i] += vel[i];
    }
}

}  // namespace partdet
