#pragma once

#include <cmath>
#include <stdexcept>

#include "partdet/image.hpp"
#include "partdet/tensor.hpp"

namespace partdet {

// The network input: 3 planes of 84x28, each normalized to zero mean and
// unit variance.
using ChannelStack = Tensor3<float>;

namespace detail {

// In-place zero-mean unit-variance normalization of one plane. A plane whose
// variance is below 1e-8 is zeroed instead.
inline void normalize_plane(float* p, int n) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += p[i];
    double mean = sum / n;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = p[i] - mean;
        sq += d * d;
    }
    double var = sq / n;
    if (var < 1e-8) {
        for (int i = 0; i < n; ++i) p[i] = 0.0f;
        return;
    }
    double inv_std = 1.0 / std::sqrt(var);
    for (int i = 0; i < n; ++i) p[i] = static_cast<float>((p[i] - mean) * inv_std);
}

// Copies a 42x14 tile into one quadrant of an 84x28 plane.
// Quadrants: 0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right.
inline void place_quadrant(float* plane, const GrayImage& tile, int quadrant) {
    int r0 = (quadrant / 2) * (kInputH / 2);
    int c0 = (quadrant % 2) * (kInputW / 2);
    for (int r = 0; r < tile.height; ++r)
        for (int c = 0; c < tile.width; ++c)
            plane[(r0 + r) * kInputW + (c0 + c)] = tile.at(r, c);
}

}  // namespace detail

// Builds the three-channel input from an 84x28 luma crop. The source corpus
// is grayscale, so the chroma planes are identically zero (Y = intensity,
// U = V = 0).
//   channel 0: the 84x28 Y plane;
//   channel 1: the 42x14 Y, U, V planes tiled into quadrants TL, TR, BL,
//              with the BR quadrant left at zero;
//   channel 2: four 42x14 edge maps (Sobel magnitude of Y, U, V, and their
//              pointwise maximum) tiled TL, TR, BL, BR.
// Each channel is then normalized to zero mean / unit variance; constant
// channels become all-zero.
inline ChannelStack build_channel_stack(const GrayImage& crop) {
    if (crop.height != kInputH || crop.width != kInputW)
        throw std::invalid_argument("build_channel_stack: crop must be 84x28");

    ChannelStack stack(kInputChannels, kInputH, kInputW, 0.0f);
    int plane_n = kInputH * kInputW;

    // channel 0: luma
    for (int i = 0; i < plane_n; ++i) stack.plane(0)[i] = crop.data[static_cast<std::size_t>(i)];

    // half-resolution YUV planes
    GrayImage y_small = downsample2x2(crop);
    GrayImage u_small(y_small.height, y_small.width, 0.0f);
    GrayImage v_small(y_small.height, y_small.width, 0.0f);

    detail::place_quadrant(stack.plane(1), y_small, 0);
    detail::place_quadrant(stack.plane(1), u_small, 1);
    detail::place_quadrant(stack.plane(1), v_small, 2);
    // bottom-right quadrant stays zero

    // channel 2: Sobel magnitude of each YUV plane, plus the pointwise max
    GrayImage ey = sobel_magnitude(y_small);
    GrayImage eu = sobel_magnitude(u_small);
    GrayImage ev = sobel_magnitude(v_small);
    GrayImage emax(ey.height, ey.width);
    for (std::size_t i = 0; i < emax.data.size(); ++i)
        emax.data[i] = std::max(ey.data[i], std::max(eu.data[i], ev.data[i]));

    detail::place_quadrant(stack.plane(2), ey, 0);
    detail::place_quadrant(stack.plane(2), eu, 1);
    detail::place_quadrant(stack.plane(2), ev, 2);
    detail::place_quadrant(stack.plane(2), emax, 3);

    for (int ch = 0; ch < kInputChannels; ++ch) detail::normalize_plane(stack.plane(ch), plane_n);
    return stack;
}

// The full crop preprocessing: a 40x100 scene-space window is turned 90
// degrees clockwise so the car length runs along rows, then bilinearly
// resized to 84x28 and expanded into the channel stack.
inline ChannelStack preprocess_window(const GrayImage& window40x100) {
    if (window40x100.height != kWindowH || window40x100.width != kWindowW)
        throw std::invalid_argument("preprocess_window: window must be 40x100");
    GrayImage upright = rotate90_cw(window40x100);
    GrayImage resized = resize_bilinear(upright, kInputH, kInputW);
    return build_channel_stack(resized);
}

}  // namespace partdet
