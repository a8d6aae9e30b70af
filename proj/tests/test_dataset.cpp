#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "partdet/common.hpp"
#include "partdet/dataset.hpp"
#include "partdet/synthetic.hpp"

using namespace partdet;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("partdet_test_" + std::to_string(::getpid()) + "_" +
                                             std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::vector<LabeledCrop> tiny_crops(int n, int label_mod = 2) {
    std::vector<LabeledCrop> crops;
    Rng rng(7);
    for (int i = 0; i < n; ++i) {
        GrayImage img(kWindowH, kWindowW);
        for (auto& v : img.data) v = static_cast<float>(rng.uniform(0, 255));
        crops.push_back(make_crop(std::move(img), i % label_mod, "crop-" + std::to_string(i)));
    }
    return crops;
}

}  // namespace

TEST(Loader, SyntheticCorpusRoundTrip) {
    TempDir tmp;
    SyntheticOptions opts;
    opts.positives = 6;
    opts.negatives = 4;
    opts.scenes = 3;
    int cars = write_synthetic_corpus(tmp.path().string(), opts);

    std::vector<LabeledCrop> crops = load_training_set(tmp.path().string());
    ASSERT_EQ(crops.size(), 10u);
    int positives = 0;
    for (const auto& c : crops) positives += c.label;
    EXPECT_EQ(positives, 6);
    for (const auto& c : crops) {
        EXPECT_EQ(c.source->height, kWindowH);
        EXPECT_EQ(c.source->width, kWindowW);
        EXPECT_DOUBLE_EQ(c.rotation_deg, 0.0);
    }
    // positives come first, sorted by filename
    EXPECT_EQ(crops[0].source_id, "pos/pos-0000.pgm");
    EXPECT_EQ(crops[6].source_id, "neg/neg-0000.pgm");

    std::vector<TestScene> scenes =
        load_test_scenes((tmp.path() / "test").string(), (tmp.path() / "trueLocations.txt").string());
    ASSERT_EQ(scenes.size(), 3u);
    int truths = 0;
    for (const auto& s : scenes) truths += static_cast<int>(s.ground_truths.size());
    EXPECT_EQ(truths, cars);
}

TEST(Loader, DeterministicOrdering) {
    TempDir tmp;
    SyntheticOptions opts;
    opts.positives = 5;
    opts.negatives = 5;
    opts.scenes = 1;
    write_synthetic_corpus(tmp.path().string(), opts);
    auto a = load_training_set(tmp.path().string());
    auto b = load_training_set(tmp.path().string());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].source_id, b[i].source_id);
}

TEST(Loader, MissingRootIsIoError) {
    EXPECT_THROW(load_training_set("/nonexistent/path/xyz"), Error);
}

TEST(Loader, EmptyCorpusIsFormatError) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pos");
    fs::create_directories(tmp.path() / "neg");
    EXPECT_THROW(load_training_set(tmp.path().string()), FormatError);
}

TEST(Loader, SingleValidPositive) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pos");
    GrayImage img(kWindowH, kWindowW, 100.0f);
    write_pgm_file((tmp.path() / "pos" / "only.pgm").string(), img);
    auto crops = load_training_set(tmp.path().string());
    ASSERT_EQ(crops.size(), 1u);
    EXPECT_EQ(crops[0].label, 1);
}

TEST(Loader, WrongCropSizeNamedInError) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "pos");
    GrayImage img(30, 100, 0.0f);
    write_pgm_file((tmp.path() / "pos" / "bad.pgm").string(), img);
    try {
        load_training_set(tmp.path().string());
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
    }
}

TEST(TruthParser, AcceptsDocumentedGrammar) {
    auto [index, anchors] = parse_truth_line("3: (25, 48)", 1);
    EXPECT_EQ(index, 3);
    ASSERT_EQ(anchors.size(), 1u);
    EXPECT_EQ(anchors[0], (std::pair<int, int>{25, 48}));

    auto [i2, a2] = parse_truth_line("12: (0,1) (40, 60) (-3, 7)", 5);
    EXPECT_EQ(i2, 12);
    ASSERT_EQ(a2.size(), 3u);
    EXPECT_EQ(a2[2], (std::pair<int, int>{-3, 7}));

    auto [i3, a3] = parse_truth_line("7:", 9);
    EXPECT_EQ(i3, 7);
    EXPECT_TRUE(a3.empty());
}

TEST(TruthParser, NamesLineOnError) {
    try {
        parse_truth_line("3: banana", 42);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
    }
    EXPECT_THROW(parse_truth_line("no colon here", 1), ParseError);
    EXPECT_THROW(parse_truth_line("5: (1, 2", 1), ParseError);
}

TEST(Loader, TruthForMissingSceneIsFormatError) {
    TempDir tmp;
    fs::create_directories(tmp.path() / "test");
    GrayImage scene(kWindowH + 8, kWindowW + 8, 128.0f);
    write_pgm_file((tmp.path() / "test" / "test-0.pgm").string(), scene);
    std::ofstream truths(tmp.path() / "true.txt");
    truths << "0: (1, 2)\n9: (3, 4)\n";
    truths.close();
    EXPECT_THROW(load_test_scenes((tmp.path() / "test").string(), (tmp.path() / "true.txt").string()),
                 FormatError);
}

TEST(Augment, CountFormulaAndLabels) {
    auto crops = tiny_crops(4);
    auto out = augment_rotations(crops, 10.0, 1.0);
    EXPECT_EQ(out.size(), 4u * 21u);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_EQ(out[i].label, crops[i / 21].label);
        EXPECT_EQ(out[i].source_id, crops[i / 21].source_id);
        EXPECT_LE(std::abs(out[i].rotation_deg), 10.0);
    }
    // rotation angles per source form the full ladder
    std::set<double> angles;
    for (std::size_t i = 0; i < 21; ++i) angles.insert(out[i].rotation_deg);
    EXPECT_EQ(angles.size(), 21u);
    EXPECT_TRUE(angles.count(0.0));
    EXPECT_TRUE(angles.count(-10.0));
    EXPECT_TRUE(angles.count(10.0));
}

TEST(Augment, RandomizedCountProperty) {
    Rng rng(9);
    auto crops = tiny_crops(3);
    for (int trial = 0; trial < 10; ++trial) {
        int steps = rng.uniform_int(0, 6);
        double step = 0.5 * rng.uniform_int(1, 4);
        double max_deg = steps * step;
        auto out = augment_rotations(crops, max_deg, step);
        ASSERT_EQ(out.size(), crops.size() * static_cast<std::size_t>(2 * steps + 1));
    }
}

TEST(Augment, DegenerateRangeKeepsInput) {
    auto crops = tiny_crops(3);
    auto out = augment_rotations(crops, 0.0, 1.0);
    ASSERT_EQ(out.size(), crops.size());
    for (const auto& c : out) EXPECT_DOUBLE_EQ(c.rotation_deg, 0.0);
}

TEST(Augment, RejectsBadStep) {
    auto crops = tiny_crops(1);
    EXPECT_THROW(augment_rotations(crops, 10.0, 0.0), std::invalid_argument);
    EXPECT_THROW(augment_rotations(crops, 10.0, -1.0), std::invalid_argument);
}

TEST(Augment, RotatedVariantChangesStack) {
    auto crops = tiny_crops(1, 1);
    auto out = augment_rotations(crops, 5.0, 5.0);
    ASSERT_EQ(out.size(), 3u);
    ChannelStack center = out[1].stack();
    ChannelStack tilted = out[0].stack();
    double diff = 0.0;
    for (std::size_t i = 0; i < center.v.size(); ++i) diff += std::abs(center.v[i] - tilted.v[i]);
    EXPECT_GT(diff, 1.0);
}

TEST(Split, IsDeterministicAndKeepsSourcesTogether) {
    auto crops = tiny_crops(40);
    auto augmented = augment_rotations(crops, 2.0, 1.0);
    auto [train, val] = split_validation(augmented, 0.25);
    EXPECT_GT(val.size(), 0u);
    EXPECT_GT(train.size(), 0u);
    EXPECT_EQ(train.size() + val.size(), augmented.size());
    std::set<std::string> train_ids, val_ids;
    for (const auto& c : train) train_ids.insert(c.source_id);
    for (const auto& c : val) val_ids.insert(c.source_id);
    for (const auto& id : val_ids) EXPECT_FALSE(train_ids.count(id)) << id;

    auto [train2, val2] = split_validation(augmented, 0.25);
    EXPECT_EQ(val2.size(), val.size());
}

TEST(Minibatch, PartitionArithmetic) {
    auto crops = tiny_crops(10);
    BatchSequence seq = minibatches(crops, 4, 1);
    ASSERT_EQ(seq.size(), 3u);
    EXPECT_EQ(seq.batch_indices(0).size(), 4u);
    EXPECT_EQ(seq.batch_indices(1).size(), 4u);
    EXPECT_EQ(seq.batch_indices(2).size(), 2u);
    Batch last = seq.batch(2);
    EXPECT_EQ(last.stacks.size(), 2u);
    EXPECT_EQ(last.labels.size(), 2u);
}

TEST(Minibatch, SeedDeterminesOrder) {
    auto crops = tiny_crops(12);
    BatchSequence a = minibatches(crops, 5, 42);
    BatchSequence b = minibatches(crops, 5, 42);
    EXPECT_EQ(a.order(), b.order());
    BatchSequence c = minibatches(crops, 5, 43);
    EXPECT_NE(a.order(), c.order());
}

TEST(Minibatch, EpochCoversEveryCropOnce) {
    auto crops = tiny_crops(23);
    BatchSequence seq = minibatches(crops, 7, 3);
    std::map<int, int> seen;
    for (std::size_t b = 0; b < seq.size(); ++b)
        for (int idx : seq.batch_indices(b)) seen[idx]++;
    ASSERT_EQ(seen.size(), crops.size());
    for (const auto& [idx, count] : seen) ASSERT_EQ(count, 1) << idx;
}

TEST(Minibatch, RejectsDegenerateArguments) {
    auto crops = tiny_crops(3);
    EXPECT_THROW(minibatches(crops, 0, 1), std::invalid_argument);
    std::vector<LabeledCrop> empty;
    EXPECT_THROW(minibatches(empty, 4, 1), std::invalid_argument);
}
