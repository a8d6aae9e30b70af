#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "partdet/dataset.hpp"
#include "partdet/network.hpp"

namespace partdet {

struct DetectionRecord {
    std::string scene_id;
    int row = 0;
    int col = 0;
    double score = 0.0;  // y_hat in [0, 1]
};

struct LabeledDetection {
    DetectionRecord det;
    bool is_tp = false;
};

struct CurvePoint {
    double threshold = 0.0;
    double fppi = 0.0;
    double miss_rate = 0.0;
};

struct EvalCurve {
    std::vector<CurvePoint> points;  // ordered by descending threshold, fppi nondecreasing
    double lamr = 1.0;
};

struct MatchResult {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    std::vector<bool> det_is_tp;  // aligned with the canonical detection order
};

namespace detail {

// Canonical detection order: descending score, then scene, row, col. Greedy
// matching over this order makes the counts independent of the input
// permutation of equal-score records.
inline bool canonical_det_less(const DetectionRecord& a, const DetectionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene_id != b.scene_id) return a.scene_id < b.scene_id;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
}

}  // namespace detail

// Scores every 40x100 window on the stride grid of one scene. A scene
// smaller than the window yields no records (warned on stderr).
inline std::vector<DetectionRecord> sliding_window_scores(const TestScene& scene, const Network<float>& net,
                                                          int stride_r, int stride_c) {
    if (stride_r < 1 || stride_c < 1) throw std::invalid_argument("sliding_window_scores: strides must be >= 1");
    std::vector<DetectionRecord> records;
    if (scene.image.height < kWindowH || scene.image.width < kWindowW) {
        std::cerr << "warning: scene " << scene.scene_id << " (" << scene.image.height << "x"
                  << scene.image.width << ") is smaller than the detection window, skipping\n";
        return records;
    }
    GrayImage window(kWindowH, kWindowW);
    ForwardCache<float> cache;
    for (int r = 0; r + kWindowH <= scene.image.height; r += stride_r) {
        for (int c = 0; c + kWindowW <= scene.image.width; c += stride_c) {
            for (int i = 0; i < kWindowH; ++i)
                for (int j = 0; j < kWindowW; ++j) window.at(i, j) = scene.image.at(r + i, c + j);
            float y = net.forward(preprocess_window(window), cache);
            records.push_back({scene.scene_id, r, c, static_cast<double>(y)});
        }
    }
    return records;
}

// Greedy same-scene suppression: walk records by descending score and keep
// one only if no already-kept record lies within the rectangular radius.
inline std::vector<DetectionRecord> non_max_suppression(std::vector<DetectionRecord> records, int radius_r,
                                                        int radius_c) {
    std::sort(records.begin(), records.end(), detail::canonical_det_less);
    std::vector<DetectionRecord> kept;
    for (const DetectionRecord& r : records) {
        bool suppressed = false;
        for (const DetectionRecord& k : kept) {
            if (k.scene_id == r.scene_id && std::abs(k.row - r.row) <= radius_r &&
                std::abs(k.col - r.col) <= radius_c) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(r);
    }
    return kept;
}

// Greedy one-to-one matching of detections (one scene) against ground-truth
// anchors: a detection claims the nearest unmatched truth within the
// rectangular tolerance.
inline MatchResult match_detections(std::vector<DetectionRecord> dets,
                                    const std::vector<std::pair<int, int>>& truths, int tol_r = 10,
                                    int tol_c = 25) {
    std::sort(dets.begin(), dets.end(), detail::canonical_det_less);
    MatchResult result;
    std::vector<bool> truth_used(truths.size(), false);
    result.det_is_tp.assign(dets.size(), false);
    for (std::size_t d = 0; d < dets.size(); ++d) {
        int best = -1;
        int best_dist = 0;
        for (std::size_t t = 0; t < truths.size(); ++t) {
            if (truth_used[t]) continue;
            int dr = std::abs(dets[d].row - truths[t].first);
            int dc = std::abs(dets[d].col - truths[t].second);
            if (dr > tol_r || dc > tol_c) continue;
            int dist = dr + dc;
            if (best < 0 || dist < best_dist) {
                best = static_cast<int>(t);
                best_dist = dist;
            }
        }
        if (best >= 0) {
            truth_used[static_cast<std::size_t>(best)] = true;
            result.det_is_tp[d] = true;
            ++result.tp;
        } else {
            ++result.fp;
        }
    }
    result.fn = static_cast<int>(truths.size()) - result.tp;
    return result;
}

inline std::array<double, 9> lamr_sample_points() {
    std::array<double, 9> pts{};
    for (int k = 0; k < 9; ++k) pts[static_cast<std::size_t>(k)] = std::pow(10.0, -2.0 + 0.25 * k);
    return pts;
}

// Mean miss rate at the nine log-spaced FPPI samples in [0.01, 1]. Each
// sample reads the curve as a step function: the point with the largest
// fppi <= sample (the rightmost point extends); samples left of the whole
// curve read miss rate 1.
inline double log_average_miss_rate(const EvalCurve& curve) {
    auto samples = lamr_sample_points();
    double total = 0.0;
    for (double f : samples) {
        double miss = 1.0;
        for (const CurvePoint& p : curve.points) {
            if (p.fppi <= f) miss = p.miss_rate;
        }
        total += miss;
    }
    return total / 9.0;
}

// Threshold sweep over all scored windows of all scenes. Detections are
// greedily labeled TP/FP once in canonical order; each unique score then
// contributes one curve point counting every detection at or above it.
inline std::pair<EvalCurve, std::vector<LabeledDetection>> miss_rate_curve(
    std::vector<DetectionRecord> records, const std::map<std::string, std::vector<std::pair<int, int>>>& truths,
    int n_scenes, int tol_r = 10, int tol_c = 25) {
    int n_truths = 0;
    for (const auto& [scene, anchors] : truths) n_truths += static_cast<int>(anchors.size());
    if (n_truths < 1) throw std::invalid_argument("miss_rate_curve: no ground truths");
    if (n_scenes < 1) throw std::invalid_argument("miss_rate_curve: no scenes");

    std::sort(records.begin(), records.end(), detail::canonical_det_less);
    std::map<std::string, std::vector<bool>> used;
    for (const auto& [scene, anchors] : truths) used[scene].assign(anchors.size(), false);

    std::vector<LabeledDetection> labeled;
    labeled.reserve(records.size());
    for (const DetectionRecord& det : records) {
        LabeledDetection ld{det, false};
        auto it = truths.find(det.scene_id);
        if (it != truths.end()) {
            const auto& anchors = it->second;
            auto& flags = used[det.scene_id];
            int best = -1, best_dist = 0;
            for (std::size_t t = 0; t < anchors.size(); ++t) {
                if (flags[t]) continue;
                int dr = std::abs(det.row - anchors[t].first);
                int dc = std::abs(det.col - anchors[t].second);
                if (dr > tol_r || dc > tol_c) continue;
                int dist = dr + dc;
                if (best < 0 || dist < best_dist) {
                    best = static_cast<int>(t);
                    best_dist = dist;
                }
            }
            if (best >= 0) {
                flags[static_cast<std::size_t>(best)] = true;
                ld.is_tp = true;
            }
        }
        labeled.push_back(ld);
    }

    EvalCurve curve;
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (labeled[i].is_tp)
            ++tp;
        else
            ++fp;
        bool last_of_threshold = i + 1 == labeled.size() || labeled[i + 1].det.score != labeled[i].det.score;
        if (last_of_threshold) {
            CurvePoint p;
            p.threshold = labeled[i].det.score;
            p.fppi = static_cast<double>(fp) / n_scenes;
            p.miss_rate = static_cast<double>(n_truths - tp) / n_truths;
            curve.points.push_back(p);
        }
    }
    curve.lamr = log_average_miss_rate(curve);
    return {curve, labeled};
}

struct EvalOptions {
    int stride_r = 4;
    int stride_c = 4;
    int nms_radius_r = 10;
    int nms_radius_c = 25;
    int tol_r = 10;
    int tol_c = 25;
    int threads = 1;
};

struct EvalResult {
    EvalCurve curve;
    std::vector<LabeledDetection> detections;
    int tp = 0, fp = 0, fn = 0;
    int n_scenes = 0, n_truths = 0;
};

// Full evaluation: score all scenes (parallel, merged in scene order),
// suppress, match and sweep.
inline EvalResult evaluate_scenes(const std::vector<TestScene>& scenes, const Network<float>& net,
                                  const EvalOptions& opts = {}) {
    if (scenes.empty()) throw std::invalid_argument("evaluate_scenes: no scenes");
    std::vector<std::vector<DetectionRecord>> per_scene(scenes.size());
    parallel_for(static_cast<int>(scenes.size()), opts.threads, [&](int i) {
        auto idx = static_cast<std::size_t>(i);
        auto raw = sliding_window_scores(scenes[idx], net, opts.stride_r, opts.stride_c);
        per_scene[idx] = non_max_suppression(std::move(raw), opts.nms_radius_r, opts.nms_radius_c);
    });

    std::vector<DetectionRecord> all;
    std::map<std::string, std::vector<std::pair<int, int>>> truths;
    EvalResult result;
    result.n_scenes = static_cast<int>(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        all.insert(all.end(), per_scene[i].begin(), per_scene[i].end());
        truths[scenes[i].scene_id] = scenes[i].ground_truths;
        result.n_truths += static_cast<int>(scenes[i].ground_truths.size());
    }
    auto [curve, labeled] = miss_rate_curve(std::move(all), truths, result.n_scenes, opts.tol_r, opts.tol_c);
    result.curve = std::move(curve);
    result.detections = std::move(labeled);
    for (const LabeledDetection& d : result.detections) (d.is_tp ? result.tp : result.fp)++;
    result.fn = result.n_truths - result.tp;
    return result;
}

// ---- output files -----------------------------------------------------------

inline void write_detections_csv(const std::string& path, const std::vector<LabeledDetection>& dets) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "scene_id,row,col,score,label\n";
    for (const LabeledDetection& d : dets)
        out << d.det.scene_id << "," << d.det.row << "," << d.det.col << "," << d.det.score << ","
            << (d.is_tp ? "tp" : "fp") << "\n";
}

inline void write_curve_csv(const std::string& path, const EvalCurve& curve) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "threshold,fppi,miss_rate\n";
    for (const CurvePoint& p : curve.points) out << p.threshold << "," << p.fppi << "," << p.miss_rate << "\n";
}

inline void write_summary_csv(const std::string& path, const EvalResult& r) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << "# lamr = arithmetic mean of the miss rate at nine FPPI points 10^(-2+k/4), k=0..8\n";
    out << "lamr,tp,fp,fn,n_scenes,n_truths\n";
    out << r.curve.lamr << "," << r.tp << "," << r.fp << "," << r.fn << "," << r.n_scenes << ","
        << r.n_truths << "\n";
}

// Two-column (fppi, miss rate) pairs, ready for a log-x plot.
inline void write_plot_data(const std::string& path, const EvalCurve& curve) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    for (const CurvePoint& p : curve.points) out << p.fppi << " " << p.miss_rate << "\n";
}

}  // namespace partdet
