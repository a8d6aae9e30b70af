#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "partdet/config.hpp"
#include "partdet/trainer.hpp"

using namespace partdet;

namespace {

std::string write_temp_config(const std::string& contents) {
    static int counter = 0;
    auto path = std::filesystem::temp_directory_path() /
                ("partdet_cfg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".cfg");
    std::ofstream out(path);
    out << contents;
    return path.string();
}

}  // namespace

TEST(Config, DefaultsCoverSchema) {
    Config cfg = Config::defaults();
    EXPECT_EQ(cfg.get_int("seed"), 1);
    EXPECT_EQ(cfg.get_int("batch_size"), 32);
    EXPECT_DOUBLE_EQ(cfg.get_double("momentum"), 0.9);
    EXPECT_TRUE(cfg.get_bool("augment"));
    EXPECT_EQ(cfg.deformation_mode(), DeformationMode::kQuadratic);
    EXPECT_EQ(cfg.visibility_mode(), VisibilityMode::kHierarchical);
    auto parts = cfg.part_layout();
    EXPECT_EQ(parts.size(), 8u);
}

TEST(Config, RejectsUnknownKey) {
    Config cfg = Config::defaults();
    EXPECT_THROW(cfg.set("no_such_key", "1"), ConfigError);
    EXPECT_THROW(cfg.apply_override("bogus=3"), ConfigError);
    EXPECT_THROW(cfg.apply_override("missing_equals"), ConfigError);
}

TEST(Config, FileParsingAndComments) {
    std::string path = write_temp_config(
        "# comment line\n"
        "seed = 77\n"
        "\n"
        "batch_size=4   # trailing comment\n"
        "visibility_mode = logistic\n");
    Config cfg = Config::defaults();
    cfg.load_file(path);
    EXPECT_EQ(cfg.get_int("seed"), 77);
    EXPECT_EQ(cfg.get_int("batch_size"), 4);
    EXPECT_EQ(cfg.visibility_mode(), VisibilityMode::kLogistic);
    std::filesystem::remove(path);
}

TEST(Config, BadLinesNameTheLineNumber) {
    std::string path = write_temp_config("seed = 1\nthis is not key value\n");
    Config cfg = Config::defaults();
    try {
        cfg.load_file(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST(Config, TypeErrorsAreConfigErrors) {
    Config cfg = Config::defaults();
    cfg.set("seed", "abc");
    EXPECT_THROW(cfg.get_int("seed"), ConfigError);
    cfg.set("momentum", "fast");
    EXPECT_THROW(cfg.get_double("momentum"), ConfigError);
    cfg.set("augment", "maybe");
    EXPECT_THROW(cfg.get_bool("augment"), ConfigError);
    cfg.set("deformation_mode", "cubic");
    EXPECT_THROW(cfg.deformation_mode(), ConfigError);
}

TEST(Config, PartLayoutIsConfigurableAndValidated) {
    Config cfg = Config::defaults();
    cfg.set("part1_fh", "7");
    cfg.set("part5_fh", "7");  // keep the mirror pair consistent
    auto parts = cfg.part_layout();
    EXPECT_EQ(parts[0].f_h, 7);

    cfg.set("part1_ax", "99");  // anchor outside the map
    EXPECT_THROW(cfg.part_layout(), ConfigError);
}

TEST(TrainConfigFromConfig, ValidatesRanges) {
    Config cfg = Config::defaults();
    cfg.set("stage1_epochs", "0");
    EXPECT_THROW(TrainConfig::from_config(cfg), ConfigError);

    cfg = Config::defaults();
    cfg.set("stage2_lr", "0");
    EXPECT_THROW(TrainConfig::from_config(cfg), ConfigError);

    cfg = Config::defaults();
    cfg.set("batch_size", "0");
    EXPECT_THROW(TrainConfig::from_config(cfg), ConfigError);

    cfg = Config::defaults();
    TrainConfig tc = TrainConfig::from_config(cfg);
    EXPECT_EQ(tc.stages[0].epochs, 20);
    EXPECT_EQ(tc.stages[2].epochs, 30);
    EXPECT_DOUBLE_EQ(tc.stages[2].lr, 0.001);
}
