#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "partdet/channels.hpp"
#include "partdet/common.hpp"
#include "partdet/pgm.hpp"

namespace partdet {

// One training crop. The original 40x100 raster is kept (shared between
// rotated variants) and the network input is derived on demand;
// materializing every augmented stack up front would cost hundreds of
// megabytes at full corpus scale.
struct LabeledCrop {
    std::shared_ptr<const GrayImage> source;  // 40x100
    int label = 0;                            // 1 = car, 0 = non-car
    std::string source_id;
    double rotation_deg = 0.0;

    ChannelStack stack() const {
        if (rotation_deg == 0.0) return preprocess_window(*source);
        return preprocess_window(rotate_about_center(*source, rotation_deg));
    }
};

inline LabeledCrop make_crop(GrayImage img, int label, std::string source_id, double rotation_deg = 0.0) {
    LabeledCrop crop;
    crop.source = std::make_shared<const GrayImage>(std::move(img));
    crop.label = label;
    crop.source_id = std::move(source_id);
    crop.rotation_deg = rotation_deg;
    return crop;
}

struct TestScene {
    GrayImage image;
    std::vector<std::pair<int, int>> ground_truths;  // (row, col) upper-left window anchors
    std::string scene_id;
};

struct Batch {
    std::vector<ChannelStack> stacks;
    std::vector<int> labels;
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_pgms(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

// Scene files are referenced by the trailing integer in their stem, e.g.
// test-17.pgm answers to index 17 in the ground-truth file.
inline int trailing_index(const std::string& stem) {
    int end = static_cast<int>(stem.size());
    while (end > 0 && std::isdigit(static_cast<unsigned char>(stem[static_cast<std::size_t>(end) - 1]))) --end;
    if (end == static_cast<int>(stem.size())) return -1;
    return std::stoi(stem.substr(static_cast<std::size_t>(end)));
}

}  // namespace detail

// Loads the corpus layout root/pos/*.pgm (cars) and root/neg/*.pgm
// (non-cars). Every crop must be 40x100. Files are taken in lexicographic
// order, positives first.
inline std::vector<LabeledCrop> load_training_set(const std::string& root_path) {
    namespace fs = std::filesystem;
    fs::path root(root_path);
    if (!fs::is_directory(root)) throw Error("training root is not a directory: " + root_path);

    std::vector<LabeledCrop> crops;
    for (auto [sub, label] : {std::pair<const char*, int>{"pos", 1}, {"neg", 0}}) {
        fs::path dir = root / sub;
        if (!fs::is_directory(dir)) continue;
        for (const fs::path& file : detail::sorted_pgms(dir)) {
            GrayImage img = read_pgm_file(file.string());
            if (img.height != kWindowH || img.width != kWindowW)
                throw FormatError("training crop is not 40x100: " + file.string());
            crops.push_back(make_crop(std::move(img), label, std::string(sub) + "/" + file.filename().string()));
        }
    }
    if (crops.empty()) throw FormatError("no training crops found under " + root_path);
    return crops;
}

// Parses one ground-truth line: "<index>: (r, c) (r, c) ...". Anchors are
// 0-based window upper-left corners in scene coordinates.
inline std::pair<int, std::vector<std::pair<int, int>>> parse_truth_line(const std::string& line,
                                                                         int line_number) {
    auto fail = [line_number](const std::string& why) {
        throw ParseError("ground truth line " + std::to_string(line_number) + ": " + why);
    };
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) fail("missing ':'");
    int index = 0;
    try {
        std::size_t used = 0;
        index = std::stoi(line.substr(0, colon), &used);
        while (used < colon)
            if (!std::isspace(static_cast<unsigned char>(line[used++]))) fail("bad scene index");
    } catch (const std::exception&) {
        fail("bad scene index");
    }
    std::vector<std::pair<int, int>> anchors;
    std::size_t pos = colon + 1;
    auto skip_ws = [&] {
        while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    };
    auto read_int = [&]() {
        skip_ws();
        std::size_t start = pos;
        if (pos < line.size() && (line[pos] == '-' || line[pos] == '+')) ++pos;
        while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos]))) ++pos;
        if (pos == start) fail("expected integer");
        return std::stoi(line.substr(start, pos - start));
    };
    while (true) {
        skip_ws();
        if (pos >= line.size()) break;
        if (line[pos] != '(') fail("expected '('");
        ++pos;
        int r = read_int();
        skip_ws();
        if (pos >= line.size() || line[pos] != ',') fail("expected ','");
        ++pos;
        int c = read_int();
        skip_ws();
        if (pos >= line.size() || line[pos] != ')') fail("expected ')'");
        ++pos;
        anchors.emplace_back(r, c);
    }
    return {index, anchors};
}

// Loads root/test scenes plus the ground-truth location file. Anchors are
// clamped so a full 40x100 window fits inside the scene (a handful of corpus
// annotations sit a few pixels outside).
inline std::vector<TestScene> load_test_scenes(const std::string& test_dir, const std::string& truth_file) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(test_dir)) throw Error("test directory missing: " + test_dir);
    std::ifstream truths_in(truth_file);
    if (!truths_in) throw Error("cannot open ground truth file: " + truth_file);

    std::vector<TestScene> scenes;
    std::vector<int> index_of;  // trailing index per scene position
    for (const fs::path& file : detail::sorted_pgms(test_dir)) {
        TestScene scene;
        scene.image = read_pgm_file(file.string());
        scene.scene_id = file.stem().string();
        scenes.push_back(std::move(scene));
        index_of.push_back(detail::trailing_index(file.stem().string()));
    }

    std::string line;
    int line_number = 0;
    while (std::getline(truths_in, line)) {
        ++line_number;
        std::string trimmed = line;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
        if (trimmed.empty()) continue;
        auto [index, anchors] = parse_truth_line(trimmed, line_number);
        auto it = std::find(index_of.begin(), index_of.end(), index);
        if (it == index_of.end())
            throw FormatError("ground truth references scene index " + std::to_string(index) +
                              " with no matching file in " + test_dir);
        TestScene& scene = scenes[static_cast<std::size_t>(it - index_of.begin())];
        for (auto [r, c] : anchors) {
            r = std::clamp(r, 0, std::max(0, scene.image.height - kWindowH));
            c = std::clamp(c, 0, std::max(0, scene.image.width - kWindowW));
            scene.ground_truths.emplace_back(r, c);
        }
    }
    return scenes;
}

// Expands each crop into rotated variants from -max_deg to +max_deg in
// step_deg increments, applied to the original 40x100 raster (labels and
// source ids carry over).
inline std::vector<LabeledCrop> augment_rotations(const std::vector<LabeledCrop>& crops, double max_deg,
                                                  double step_deg) {
    if (step_deg <= 0.0) throw std::invalid_argument("augment_rotations: step_deg must be > 0");
    if (max_deg < 0.0) throw std::invalid_argument("augment_rotations: max_deg must be >= 0");
    int steps = static_cast<int>(std::floor(max_deg / step_deg + 1e-9));
    std::vector<LabeledCrop> out;
    out.reserve(crops.size() * static_cast<std::size_t>(2 * steps + 1));
    for (const LabeledCrop& crop : crops) {
        for (int k = -steps; k <= steps; ++k) {
            LabeledCrop variant = crop;
            variant.rotation_deg = k * step_deg;
            out.push_back(std::move(variant));
        }
    }
    return out;
}

// Deterministic split keyed on the hash of source_id, so every rotated
// variant of a source lands on the same side.
inline std::pair<std::vector<LabeledCrop>, std::vector<LabeledCrop>> split_validation(
    const std::vector<LabeledCrop>& crops, double val_fraction) {
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw std::invalid_argument("split_validation: fraction must be in [0, 1)");
    std::uint64_t threshold = static_cast<std::uint64_t>(val_fraction * 4294967296.0);
    std::pair<std::vector<LabeledCrop>, std::vector<LabeledCrop>> out;
    for (const LabeledCrop& crop : crops) {
        bool is_val = (fnv1a64(crop.source_id) & 0xffffffffull) < threshold;
        (is_val ? out.second : out.first).push_back(crop);
    }
    return out;
}

// One epoch of shuffled minibatches. Batches are index slices of a single
// seed-determined permutation; stacks are built on access.
class BatchSequence {
public:
    BatchSequence(const std::vector<LabeledCrop>& crops, int batch_size, std::uint64_t seed)
        : crops_(&crops), batch_size_(batch_size) {
        if (crops.empty()) throw std::invalid_argument("minibatches: empty crop list");
        if (batch_size < 1) throw std::invalid_argument("minibatches: batch_size must be >= 1");
        order_.resize(crops.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
        Rng rng(seed);
        rng.shuffle(order_);
    }

    std::size_t size() const { return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
                                      static_cast<std::size_t>(batch_size_); }

    const std::vector<int>& order() const { return order_; }

    std::vector<int> batch_indices(std::size_t b) const {
        std::size_t lo = b * static_cast<std::size_t>(batch_size_);
        std::size_t hi = std::min(order_.size(), lo + static_cast<std::size_t>(batch_size_));
        return {order_.begin() + static_cast<std::ptrdiff_t>(lo), order_.begin() + static_cast<std::ptrdiff_t>(hi)};
    }

    Batch batch(std::size_t b) const {
        Batch out;
        for (int idx : batch_indices(b)) {
            const LabeledCrop& crop = (*crops_)[static_cast<std::size_t>(idx)];
            out.stacks.push_back(crop.stack());
            out.labels.push_back(crop.label);
        }
        return out;
    }

private:
    const std::vector<LabeledCrop>* crops_;
    int batch_size_;
    std::vector<int> order_;
};

inline BatchSequence minibatches(const std::vector<LabeledCrop>& crops, int batch_size, std::uint64_t seed) {
    return BatchSequence(crops, batch_size, seed);
}

}  // namespace partdet
