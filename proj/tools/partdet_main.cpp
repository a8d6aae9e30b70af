// Command-line front end for the part-based car detector: corpus
// validation, multi-stage training, sliding-window evaluation, single-image
// detection and gradient checking.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "partdet/partdet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace partdet;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output_dir = "out";
    long seed = -1;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "configuration file (key=value lines)");
    cmd->add_option("--set", args.overrides, "override a configuration key, e.g. --set seed=7")
        ->type_name("KEY=VALUE");
    cmd->add_option("-o,--output-dir", args.output_dir, "directory for all outputs")
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "shorthand for --set seed=N");
    cmd->add_option("--threads", args.threads, "shorthand for --set threads=N");
}

Config resolve_config(const CommonArgs& args) {
    Config cfg = Config::defaults();
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    for (const std::string& assignment : args.overrides) cfg.apply_override(assignment);
    if (args.seed >= 0) cfg.set("seed", std::to_string(args.seed));
    if (args.threads >= 0) cfg.set("threads", std::to_string(args.threads));
    return cfg;
}

std::string config_reference() {
    std::string out = "Configuration keys (defaults in parentheses):\n";
    for (const ConfigKey& k : Config::schema()) {
        out += "  " + k.name + " (" + k.default_value + "): " + k.help + "\n";
    }
    return out;
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes);
}

EvalOptions eval_options(const Config& cfg) {
    EvalOptions opts;
    opts.stride_r = static_cast<int>(cfg.get_int("eval_stride_r"));
    opts.stride_c = static_cast<int>(cfg.get_int("eval_stride_c"));
    opts.nms_radius_r = static_cast<int>(cfg.get_int("nms_radius_r"));
    opts.nms_radius_c = static_cast<int>(cfg.get_int("nms_radius_c"));
    opts.tol_r = static_cast<int>(cfg.get_int("match_tol_r"));
    opts.tol_c = static_cast<int>(cfg.get_int("match_tol_c"));
    opts.threads = static_cast<int>(cfg.get_int("threads"));
    return opts;
}

int cmd_prepare(const CommonArgs& args, const std::string& data_root) {
    Config cfg = resolve_config(args);
    std::vector<LabeledCrop> crops = load_training_set(data_root);
    int positives = 0;
    for (const LabeledCrop& c : crops) positives += c.label;
    int negatives = static_cast<int>(crops.size()) - positives;

    json manifest;
    manifest["corpus_root"] = data_root;
    manifest["positives"] = positives;
    manifest["negatives"] = negatives;
    manifest["crop_size"] = {kWindowH, kWindowW};

    fs::path test_dir = fs::path(data_root) / "test";
    fs::path truth_file = fs::path(data_root) / "trueLocations.txt";
    if (fs::is_directory(test_dir) && fs::exists(truth_file)) {
        std::vector<TestScene> scenes = load_test_scenes(test_dir.string(), truth_file.string());
        int truths = 0;
        json scene_list = json::array();
        for (const TestScene& s : scenes) {
            truths += static_cast<int>(s.ground_truths.size());
            scene_list.push_back({{"id", s.scene_id},
                                  {"height", s.image.height},
                                  {"width", s.image.width},
                                  {"ground_truths", s.ground_truths.size()}});
        }
        manifest["scenes"] = scene_list;
        manifest["scene_count"] = scenes.size();
        manifest["ground_truth_count"] = truths;
        std::cout << "test scenes: " << scenes.size() << " with " << truths << " ground truths\n";
    } else {
        std::cout << "no test/ directory or trueLocations.txt, skipping scene validation\n";
    }

    fs::create_directories(args.output_dir);
    fs::path manifest_path = fs::path(args.output_dir) / "manifest.json";
    std::ofstream out(manifest_path);
    out << manifest.dump(2) << "\n";
    std::cout << "training crops: " << positives << " positive, " << negatives << " negative\n";
    std::cout << "manifest written to " << manifest_path.string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& data_root) {
    Config cfg = resolve_config(args);
    TrainConfig tc = TrainConfig::from_config(cfg);
    std::vector<LabeledCrop> crops = load_training_set(data_root);
    int positives = 0;
    for (const LabeledCrop& c : crops) positives += c.label;
    std::cout << "loaded " << crops.size() << " crops (" << positives << " positive)\n";

    Trainer trainer(tc, crops);
    std::cout << "training split: " << trainer.training_crops().size() << " crops ("
              << (tc.augment ? "augmented" : "no augmentation") << "), validation: "
              << trainer.validation_crops().size() << "\n";
    auto t0 = std::chrono::steady_clock::now();
    trainer.train_all(args.output_dir);
    auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (int stage = 1; stage <= 3; ++stage) {
        double final_loss = 0.0;
        for (const EpochLogRow& r : trainer.log())
            if (r.stage == stage) final_loss = r.train_loss;
        std::cout << "stage " << stage << " final training loss: " << final_loss << "\n";
    }
    fs::path final_path = fs::path(args.output_dir) / "final.ckpt";
    std::printf("final checkpoint digest: %016llx\n",
                static_cast<unsigned long long>(file_digest(final_path.string())));
    std::cout << "trained in " << seconds << " s; outputs under " << args.output_dir << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_root, const std::string& checkpoint) {
    Config cfg = resolve_config(args);
    NetworkParams<float> params = load_checkpoint(checkpoint);
    Network<float> net(params);

    fs::path test_dir = fs::path(data_root) / "test";
    fs::path truth_file = fs::path(data_root) / "trueLocations.txt";
    std::vector<TestScene> scenes = load_test_scenes(test_dir.string(), truth_file.string());
    EvalResult result = evaluate_scenes(scenes, net, eval_options(cfg));

    fs::create_directories(args.output_dir);
    fs::path out(args.output_dir);
    write_detections_csv((out / "detections.csv").string(), result.detections);
    write_curve_csv((out / "curve.csv").string(), result.curve);
    write_summary_csv((out / "summary.csv").string(), result);
    write_plot_data((out / "curve_plot.dat").string(), result.curve);

    std::cout << "scenes: " << result.n_scenes << ", ground truths: " << result.n_truths << "\n";
    std::cout << "tp: " << result.tp << ", fp: " << result.fp << ", fn: " << result.fn << "\n";
    std::cout << "log-average miss rate: " << result.curve.lamr << "\n";
    return 0;
}

int cmd_detect(const CommonArgs& args, const std::string& image_path, const std::string& checkpoint,
               double threshold_override) {
    Config cfg = resolve_config(args);
    double threshold = threshold_override >= 0.0 ? threshold_override : cfg.get_double("detect_threshold");
    NetworkParams<float> params = load_checkpoint(checkpoint);
    Network<float> net(params);

    TestScene scene;
    scene.image = read_pgm_file(image_path);
    scene.scene_id = fs::path(image_path).stem().string();
    EvalOptions opts = eval_options(cfg);
    auto records = sliding_window_scores(scene, net, opts.stride_r, opts.stride_c);
    records = non_max_suppression(std::move(records), opts.nms_radius_r, opts.nms_radius_c);

    std::cout << "row,col,score\n";
    int shown = 0;
    for (const DetectionRecord& r : records) {
        if (r.score < threshold) continue;
        std::cout << r.row << "," << r.col << "," << r.score << "\n";
        ++shown;
    }
    std::cerr << shown << " window(s) at or above threshold " << threshold << "\n";
    return 0;
}

int cmd_gradcheck(const CommonArgs& args, int stage) {
    Config cfg = resolve_config(args);
    Architecture arch;
    arch.stage = static_cast<Stage>(stage);
    arch.deform_mode = cfg.deformation_mode();
    arch.vis_mode = cfg.visibility_mode();
    arch.parts = cfg.part_layout();

    Rng rng(static_cast<std::uint64_t>(cfg.get_int("seed")));
    NetworkParams<double> params = NetworkParams<double>::init(arch, rng);
    std::vector<Sample<double>> batch;
    for (int i = 0; i < 8; ++i) {
        Sample<double> s;
        s.input = Tensor3<double>(kInputChannels, kInputH, kInputW);
        for (auto& v : s.input.v) v = rng.normal();
        s.label = rng.uniform_int(0, 1);
        batch.push_back(std::move(s));
    }

    GradCheckOptions opts;
    opts.threads = static_cast<int>(cfg.get_int("threads"));
    auto t0 = std::chrono::steady_clock::now();
    GradCheckResult r = grad_check(params, batch, opts);
    auto seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const auto& [group, err] : r.group_max) std::printf("%-12s max rel err %.3e\n", group.c_str(), err);
    std::printf("checked %zu probes (%zu tie-skipped), min argmax margin %.3e\n", r.probes_checked,
                r.probes_skipped_ties, r.min_gap);
    std::printf("max relative error %.6e (group %s) in %.2f s\n", r.max_rel_error, r.worst_group.c_str(),
                seconds);
    if (r.max_rel_error >= 1e-3) {
        std::cerr << "FAIL: gradient error above 1e-3\n";
        return 1;
    }
    std::cout << "OK\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"partdet: part-based car detector with a learned deformation layer"};
    app.require_subcommand(1);
    app.footer(config_reference());

    CommonArgs args;
    std::string data_root, checkpoint, image_path;
    double threshold_override = -1.0;
    int gradcheck_stage = 3;

    CLI::App* prepare = app.add_subcommand("prepare", "validate a corpus and write a manifest");
    add_common(prepare, args);
    prepare->add_option("--data", data_root, "corpus root (pos/, neg/, optional test/)")->required();

    CLI::App* train = app.add_subcommand("train", "run the three-stage training schedule");
    add_common(train, args);
    train->add_option("--data", data_root, "corpus root (pos/, neg/)")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test scenes");
    add_common(eval_cmd, args);
    eval_cmd->add_option("--data", data_root, "corpus root (test/, trueLocations.txt)")->required();
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

    CLI::App* detect = app.add_subcommand("detect", "score one PGM image and print detections");
    add_common(detect, args);
    detect->add_option("--image", image_path, "input PGM")->required();
    detect->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    detect->add_option("--threshold", threshold_override, "report windows scoring at or above this");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gradcheck, args);
    gradcheck->add_option("--stage", gradcheck_stage, "architecture stage to check (1, 2 or 3)")
        ->check(CLI::Range(1, 3))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (prepare->parsed()) return cmd_prepare(args, data_root);
        if (train->parsed()) return cmd_train(args, data_root);
        if (eval_cmd->parsed()) return cmd_eval(args, data_root, checkpoint);
        if (detect->parsed()) return cmd_detect(args, image_path, checkpoint, threshold_override);
        if (gradcheck->parsed()) return cmd_gradcheck(args, gradcheck_stage);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
