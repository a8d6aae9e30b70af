#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "partdet/common.hpp"

namespace partdet {

// Single-channel float raster, row-major.
struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    GrayImage() = default;
    GrayImage(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
        if (h < 1 || w < 1) throw std::invalid_argument("GrayImage: dimensions must be >= 1");
    }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

    // clamped access, used by the resampling kernels for border replication
    float at_clamped(int r, int c) const {
        if (r < 0) r = 0;
        if (r >= height) r = height - 1;
        if (c < 0) c = 0;
        if (c >= width) c = width - 1;
        return at(r, c);
    }
};

// Bilinear sample at fractional (row, col), replicating the border.
inline double bilinear_sample(const GrayImage& img, double r, double c) {
    int r0 = static_cast<int>(std::floor(r));
    int c0 = static_cast<int>(std::floor(c));
    double fr = r - r0;
    double fc = c - c0;
    double v00 = img.at_clamped(r0, c0);
    double v01 = img.at_clamped(r0, c0 + 1);
    double v10 = img.at_clamped(r0 + 1, c0);
    double v11 = img.at_clamped(r0 + 1, c0 + 1);
    double top = v00 + (v01 - v00) * fc;
    double bot = v10 + (v11 - v10) * fc;
    return top + (bot - top) * fr;
}

// Bilinear resize with half-pixel center alignment. Output sample (r, c)
// reads the source at ((r+0.5)*h_in/h_out - 0.5, (c+0.5)*w_in/w_out - 0.5).
inline GrayImage resize_bilinear(const GrayImage& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
    GrayImage out(out_h, out_w);
    double sr = static_cast<double>(img.height) / out_h;
    double sc = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double src_r = (r + 0.5) * sr - 0.5;
        for (int c = 0; c < out_w; ++c) {
            double src_c = (c + 0.5) * sc - 0.5;
            out.at(r, c) = static_cast<float>(bilinear_sample(img, src_r, src_c));
        }
    }
    return out;
}

// Rotation about the image center, output dims equal input dims. Each output
// pixel samples the source under the inverse rotation; positive degrees turn
// the content counterclockwise (rows down, cols right). Out-of-bounds samples
// replicate the nearest border.
inline GrayImage rotate_about_center(const GrayImage& img, double degrees) {
    if (std::abs(degrees) > 90.0) throw std::invalid_argument("rotate_about_center: |degrees| must be <= 90");
    if (degrees == 0.0) return img;
    double rad = degrees * 3.14159265358979323846 / 180.0;
    double cs = std::cos(rad);
    double sn = std::sin(rad);
    double cy = 0.5 * (img.height - 1);
    double cx = 0.5 * (img.width - 1);
    GrayImage out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        double dy = r - cy;
        for (int c = 0; c < img.width; ++c) {
            double dx = c - cx;
            double src_r = cy + cs * dy + sn * dx;
            double src_c = cx - sn * dy + cs * dx;
            out.at(r, c) = static_cast<float>(bilinear_sample(img, src_r, src_c));
        }
    }
    return out;
}

// Exact 90-degree clockwise remap; H x W in, W x H out.
inline GrayImage rotate90_cw(const GrayImage& img) {
    GrayImage out(img.width, img.height);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = img.at(img.height - 1 - c, r);
    return out;
}

// Gradient magnitude sqrt(gx^2 + gy^2) with the 3x3 Sobel kernels and
// replicated borders.
inline GrayImage sobel_magnitude(const GrayImage& img) {
    if (img.height < 3 || img.width < 3) throw std::invalid_argument("sobel_magnitude: image must be at least 3x3");
    GrayImage out(img.height, img.width);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            double p00 = img.at_clamped(r - 1, c - 1), p01 = img.at_clamped(r - 1, c), p02 = img.at_clamped(r - 1, c + 1);
            double p10 = img.at_clamped(r, c - 1), p12 = img.at_clamped(r, c + 1);
            double p20 = img.at_clamped(r + 1, c - 1), p21 = img.at_clamped(r + 1, c), p22 = img.at_clamped(r + 1, c + 1);
            double gx = (p02 + 2.0 * p12 + p22) - (p00 + 2.0 * p10 + p20);
            double gy = (p20 + 2.0 * p21 + p22) - (p00 + 2.0 * p01 + p02);
            out.at(r, c) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }
    return out;
}

// 2x2 block mean; trailing odd row/col is dropped.
inline GrayImage downsample2x2(const GrayImage& img) {
    if (img.height < 2 || img.width < 2) throw std::invalid_argument("downsample2x2: image must be at least 2x2");
    GrayImage out(img.height / 2, img.width / 2);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = 0.25f * (img.at(2 * r, 2 * c) + img.at(2 * r, 2 * c + 1) +
                                    img.at(2 * r + 1, 2 * c) + img.at(2 * r + 1, 2 * c + 1));
    return out;
}

}  // namespace partdet
