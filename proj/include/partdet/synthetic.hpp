#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "partdet/dataset.hpp"
#include "partdet/image.hpp"
#include "partdet/pgm.hpp"

namespace partdet {

// Procedural stand-in corpus in the same on-disk layout as the real one:
// pos/ and neg/ crops for training, test/ scenes plus a trueLocations file.
// Positives are stylized side-view cars (body, cabin, two wheels) under
// illumination, translation and small rotation jitter; negatives are noise,
// stripes, blobs and wheel-less blocks. Useful for smoke tests and for
// exercising the full pipeline without the real corpus.
struct SyntheticOptions {
    int positives = 80;
    int negatives = 80;
    int scenes = 6;
    int scene_h = 64;
    int scene_w = 160;
    double rotation_jitter_deg = 5.0;
    std::uint64_t seed = 1;
};

namespace detail {

inline void fill_disk(GrayImage& img, double cr, double cc, double radius, float value) {
    int r0 = std::max(0, static_cast<int>(cr - radius) - 1);
    int r1 = std::min(img.height - 1, static_cast<int>(cr + radius) + 1);
    int c0 = std::max(0, static_cast<int>(cc - radius) - 1);
    int c1 = std::min(img.width - 1, static_cast<int>(cc + radius) + 1);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
            if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius) img.at(r, c) = value;
}

inline void fill_rect(GrayImage& img, int r0, int r1, int c0, int c1, float value) {
    for (int r = std::max(0, r0); r <= std::min(img.height - 1, r1); ++r)
        for (int c = std::max(0, c0); c <= std::min(img.width - 1, c1); ++c) img.at(r, c) = value;
}

inline void add_noise_and_clamp(GrayImage& img, Rng& rng, double sigma, double gain) {
    for (auto& v : img.data) {
        double x = (v + sigma * rng.normal()) * gain;
        v = static_cast<float>(std::clamp(x, 0.0, 255.0));
    }
}

}  // namespace detail

// A 40x100 car crop: light background, dark body with cabin and two wheels,
// randomly shifted, lit and slightly rotated.
inline GrayImage synthetic_car_crop(Rng& rng, double rotation_jitter_deg) {
    GrayImage img(kWindowH, kWindowW, 175.0f);
    int dr = rng.uniform_int(-3, 3);
    int dc = rng.uniform_int(-4, 4);
    detail::fill_rect(img, 12 + dr, 30 + dr, 12 + dc, 88 + dc, 70.0f);             // body
    detail::fill_rect(img, 6 + dr, 14 + dr, 34 + dc, 66 + dc, 110.0f);             // cabin
    detail::fill_disk(img, 31 + dr, 28 + dc, 6.0, 25.0f);                          // wheels
    detail::fill_disk(img, 31 + dr, 72 + dc, 6.0, 25.0f);
    detail::fill_rect(img, 37 + dr, 39 + dr, 14 + dc, 86 + dc, 140.0f);            // ground shadow
    double gain = rng.uniform(0.85, 1.15);
    detail::add_noise_and_clamp(img, rng, 5.0, gain);
    if (rotation_jitter_deg > 0.0) {
        double deg = rng.uniform(-rotation_jitter_deg, rotation_jitter_deg);
        img = rotate_about_center(img, deg);
    }
    return img;
}

// Non-car crops drawn from several families so the negative class is not a
// single texture.
inline GrayImage synthetic_negative_crop(Rng& rng, int family) {
    GrayImage img(kWindowH, kWindowW, 175.0f);
    switch (family % 5) {
        case 0:  // pure noise
            for (auto& v : img.data) v = static_cast<float>(rng.uniform(40, 215));
            break;
        case 1:  // horizontal stripes
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c) img.at(r, c) = (r / 5) % 2 ? 90.0f : 190.0f;
            break;
        case 2:  // vertical stripes
            for (int r = 0; r < img.height; ++r)
                for (int c = 0; c < img.width; ++c) img.at(r, c) = (c / 7) % 2 ? 110.0f : 200.0f;
            break;
        case 3: {  // one large block, no wheels
            int dr = rng.uniform_int(-4, 4), dc = rng.uniform_int(-6, 6);
            detail::fill_rect(img, 8 + dr, 34 + dr, 15 + dc, 85 + dc, 80.0f);
            break;
        }
        default: {  // scattered blobs
            int blobs = rng.uniform_int(3, 6);
            for (int i = 0; i < blobs; ++i)
                detail::fill_disk(img, rng.uniform(5, 35), rng.uniform(8, 92), rng.uniform(3, 7), 45.0f);
            break;
        }
    }
    double gain = rng.uniform(0.85, 1.15);
    detail::add_noise_and_clamp(img, rng, 5.0, gain);
    return img;
}

// Writes the corpus and returns the number of ground-truth cars placed.
inline int write_synthetic_corpus(const std::string& root, const SyntheticOptions& opts) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(root) / "pos");
    fs::create_directories(fs::path(root) / "neg");
    fs::create_directories(fs::path(root) / "test");
    Rng rng(opts.seed);

    char name[64];
    for (int i = 0; i < opts.positives; ++i) {
        GrayImage img = synthetic_car_crop(rng, opts.rotation_jitter_deg);
        std::snprintf(name, sizeof name, "pos-%04d.pgm", i);
        write_pgm_file((fs::path(root) / "pos" / name).string(), img);
    }
    for (int i = 0; i < opts.negatives; ++i) {
        GrayImage img = synthetic_negative_crop(rng, i);
        std::snprintf(name, sizeof name, "neg-%04d.pgm", i);
        write_pgm_file((fs::path(root) / "neg" / name).string(), img);
    }

    std::ofstream truths((fs::path(root) / "trueLocations.txt").string());
    int total_cars = 0;
    for (int i = 0; i < opts.scenes; ++i) {
        GrayImage scene(opts.scene_h, opts.scene_w, 170.0f);
        detail::add_noise_and_clamp(scene, rng, 8.0, 1.0);
        int cars = rng.uniform_int(1, 2);
        std::vector<std::pair<int, int>> anchors;
        for (int k = 0; k < cars && static_cast<int>(anchors.size()) < 2; ++k) {
            int r = rng.uniform_int(0, opts.scene_h - kWindowH);
            int c = rng.uniform_int(0, opts.scene_w - kWindowW);
            bool overlaps = false;
            for (auto [pr, pc] : anchors)
                if (std::abs(pr - r) < kWindowH && std::abs(pc - c) < kWindowW / 2) overlaps = true;
            if (overlaps) continue;
            GrayImage car = synthetic_car_crop(rng, opts.rotation_jitter_deg * 0.5);
            for (int rr = 0; rr < kWindowH; ++rr)
                for (int cc = 0; cc < kWindowW; ++cc) scene.at(r + rr, c + cc) = car.at(rr, cc);
            anchors.emplace_back(r, c);
        }
        std::snprintf(name, sizeof name, "test-%d.pgm", i);
        write_pgm_file((fs::path(root) / "test" / name).string(), scene);
        truths << i << ":";
        for (auto [r, c] : anchors) truths << " (" << r << ", " << c << ")";
        truths << "\n";
        total_cars += static_cast<int>(anchors.size());
    }
    return total_cars;
}

}  // namespace partdet
