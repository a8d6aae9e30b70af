#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "partdet/config.hpp"
#include "partdet/dataset.hpp"
#include "partdet/network.hpp"

namespace partdet {

struct StageSchedule {
    int epochs = 1;
    double lr = 0.01;
    double loss_target = 0.0;  // stop early once the epoch training loss falls below; 0 disables
};

struct TrainConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    int batch_size = 32;
    double momentum = 0.9;
    std::array<StageSchedule, 3> stages{StageSchedule{20, 0.01}, StageSchedule{20, 0.01},
                                        StageSchedule{30, 0.001}};
    bool augment = true;
    double augment_max_deg = 10.0;
    double augment_step_deg = 1.0;
    DeformationMode deform_mode = DeformationMode::kQuadratic;
    VisibilityMode vis_mode = VisibilityMode::kHierarchical;
    double val_fraction = 0.1;
    int early_stop_patience = 5;
    bool freeze_previous = false;
    std::vector<PartSpec> parts = default_part_layout();

    void validate() const {
        for (const StageSchedule& s : stages) {
            if (s.epochs < 1) throw ConfigError("stage epochs must be >= 1");
            if (!(s.lr > 0.0)) throw ConfigError("stage learning rate must be > 0");
        }
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
        if (threads < 1) throw ConfigError("threads must be >= 1");
        validate_part_layout(parts);
    }

    static TrainConfig from_config(const Config& cfg) {
        TrainConfig t;
        t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
        t.threads = static_cast<int>(cfg.get_int("threads"));
        t.batch_size = static_cast<int>(cfg.get_int("batch_size"));
        t.momentum = cfg.get_double("momentum");
        for (int s = 0; s < 3; ++s) {
            std::string p = "stage" + std::to_string(s + 1) + "_";
            t.stages[static_cast<std::size_t>(s)] = {static_cast<int>(cfg.get_int(p + "epochs")),
                                                     cfg.get_double(p + "lr"),
                                                     cfg.get_double(p + "loss_target")};
        }
        t.augment = cfg.get_bool("augment");
        t.augment_max_deg = cfg.get_double("augment_max_deg");
        t.augment_step_deg = cfg.get_double("augment_step_deg");
        t.deform_mode = cfg.deformation_mode();
        t.vis_mode = cfg.visibility_mode();
        t.val_fraction = cfg.get_double("val_fraction");
        t.early_stop_patience = static_cast<int>(cfg.get_int("early_stop_patience"));
        t.freeze_previous = cfg.get_bool("freeze_previous");
        t.parts = cfg.part_layout();
        t.validate();
        return t;
    }
};

struct EpochLogRow {
    int epoch = 0;  // 1-based within the stage
    int stage = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

inline std::vector<Sample<float>> samples_from_crops(const std::vector<LabeledCrop>& crops) {
    std::vector<Sample<float>> out;
    out.reserve(crops.size());
    for (const LabeledCrop& crop : crops) out.push_back({crop.stack(), crop.label});
    return out;
}

inline std::vector<const Sample<float>*> sample_ptrs(const std::vector<Sample<float>>& samples) {
    std::vector<const Sample<float>*> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(&s);
    return out;
}

// Fraction of positive samples classified below 0.5.
inline double classification_miss_rate(const Network<float>& net, const std::vector<Sample<float>>& samples,
                                       int threads = 1) {
    if (samples.empty()) throw std::invalid_argument("classification_miss_rate: no samples");
    std::vector<int> missed(samples.size(), 0), positive(samples.size(), 0);
    parallel_for(static_cast<int>(samples.size()), threads, [&](int i) {
        auto idx = static_cast<std::size_t>(i);
        if (samples[idx].label != 1) return;
        positive[idx] = 1;
        thread_local ForwardCache<float> cache;
        float y = net.forward(samples[idx].input, cache);
        missed[idx] = y < 0.5f ? 1 : 0;
    });
    int pos = 0, miss = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        pos += positive[i];
        miss += missed[i];
    }
    if (pos == 0) throw std::invalid_argument("classification_miss_rate: no positive samples");
    return static_cast<double>(miss) / pos;
}

// Multi-stage training orchestrator. Splits off the validation sources,
// augments the training split, then trains the three stages in sequence,
// initializing each from the previous stage's checkpoint.
class Trainer {
public:
    Trainer(TrainConfig config, const std::vector<LabeledCrop>& crops)
        : cfg_(std::move(config)), rng_(cfg_.seed) {
        cfg_.validate();
        if (crops.empty()) throw std::invalid_argument("Trainer: no training crops");
        auto [train, val] = split_validation(crops, cfg_.val_fraction);
        if (train.empty()) throw std::invalid_argument("Trainer: validation split consumed every crop");
        if (cfg_.augment) train = augment_rotations(train, cfg_.augment_max_deg, cfg_.augment_step_deg);
        train_ = std::move(train);
        val_ = std::move(val);
        val_samples_ = samples_from_crops(val_);
    }

    TrainConfig& config() { return cfg_; }
    const std::vector<LabeledCrop>& training_crops() const { return train_; }
    const std::vector<LabeledCrop>& validation_crops() const { return val_; }
    const std::vector<EpochLogRow>& log() const { return log_; }

    NetworkParams<float> train_stage1() {
        NetworkParams<float> params = NetworkParams<float>::init(make_arch(Stage::kStage1), rng_);
        run_stage(params, 0, BackwardOpts{true, true});
        return params;
    }

    NetworkParams<float> train_stage2(NetworkParams<float>& stage1) {
        if (stage1.arch.stage != Stage::kStage1)
            throw std::invalid_argument("train_stage2: expected a stage-1 checkpoint");
        NetworkParams<float> params = NetworkParams<float>::init(make_arch(Stage::kStage2), rng_);
        params.conv1 = stage1.conv1;
        run_stage(params, 1, BackwardOpts{!cfg_.freeze_previous, true});
        return params;
    }

    NetworkParams<float> train_stage3(NetworkParams<float>& stage2) {
        if (stage2.arch.stage != Stage::kStage2)
            throw std::invalid_argument("train_stage3: expected a stage-2 checkpoint");
        NetworkParams<float> params = NetworkParams<float>::init(make_arch(Stage::kStage3), rng_);
        params.conv1 = stage2.conv1;
        params.parts = stage2.parts;
        if (params.vis.mode == VisibilityMode::kLogistic) params.vis = stage2.vis;
        run_stage(params, 2, BackwardOpts{!cfg_.freeze_previous, !cfg_.freeze_previous});
        return params;
    }

    // The whole schedule. When out_dir is nonempty, writes stage1.ckpt,
    // stage2.ckpt, final.ckpt and training_log.csv under it.
    NetworkParams<float> train_all(const std::string& out_dir = "") {
        namespace fs = std::filesystem;
        if (!out_dir.empty()) fs::create_directories(out_dir);
        NetworkParams<float> s1 = train_stage1();
        if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "stage1.ckpt").string(), s1);
        NetworkParams<float> s2 = train_stage2(s1);
        if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "stage2.ckpt").string(), s2);
        NetworkParams<float> s3 = train_stage3(s2);
        if (!out_dir.empty()) {
            save_checkpoint((fs::path(out_dir) / "final.ckpt").string(), s3);
            write_log_csv((fs::path(out_dir) / "training_log.csv").string());
        }
        return s3;
    }

    void write_log_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write training log: " + path);
        out << "epoch,stage,train_loss,val_loss,val_accuracy\n";
        for (const EpochLogRow& r : log_) {
            out << r.epoch << "," << r.stage << "," << r.train_loss << ",";
            if (std::isnan(r.val_loss))
                out << ",";
            else
                out << r.val_loss << ",";
            if (!std::isnan(r.val_accuracy)) out << r.val_accuracy;
            out << "\n";
        }
    }

private:
    Architecture make_arch(Stage stage) const {
        Architecture a;
        a.stage = stage;
        a.deform_mode = cfg_.deform_mode;
        a.vis_mode = cfg_.vis_mode;
        a.parts = cfg_.parts;
        return a;
    }

    void run_stage(NetworkParams<float>& params, int stage_idx, BackwardOpts opts) {
        const StageSchedule& sched = cfg_.stages[static_cast<std::size_t>(stage_idx)];
        NetworkParams<float> grads = NetworkParams<float>::make(params.arch);
        NetworkParams<float> velocity = NetworkParams<float>::make(params.arch);
        MiniBatchRunner<float> runner;
        MiniBatchRunner<float> val_runner;

        double best_val = std::numeric_limits<double>::max();
        NetworkParams<float> best_params = params;
        int since_best = 0;
        bool use_early_stop = !val_samples_.empty() && cfg_.early_stop_patience > 0;

        for (int epoch = 1; epoch <= sched.epochs; ++epoch) {
            BatchSequence seq(train_, cfg_.batch_size,
                              cfg_.seed * 1000003ull + static_cast<std::uint64_t>(stage_idx) * 1009ull +
                                  static_cast<std::uint64_t>(epoch));
            double loss_sum = 0.0;
            std::size_t seen = 0;
            Network<float> net(params);
            for (std::size_t b = 0; b < seq.size(); ++b) {
                std::vector<int> idx = seq.batch_indices(b);
                std::vector<Sample<float>> batch;
                batch.reserve(idx.size());
                for (int i : idx) {
                    const LabeledCrop& crop = train_[static_cast<std::size_t>(i)];
                    batch.push_back({crop.stack(), crop.label});
                }
                float loss;
                try {
                    loss = runner.loss_and_grad(net, sample_ptrs(batch), grads, opts, cfg_.threads);
                } catch (const EvaluationError& e) {
                    throw TrainingDivergence(std::string("stage ") + std::to_string(stage_idx + 1) +
                                             " diverged: " + e.what());
                }
                if (!std::isfinite(loss))
                    throw TrainingDivergence("stage " + std::to_string(stage_idx + 1) +
                                             " diverged: non-finite loss at epoch " + std::to_string(epoch));
                sgd_step(params, grads, velocity, static_cast<float>(sched.lr),
                         static_cast<float>(cfg_.momentum));
                loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
                seen += idx.size();
            }

            EpochLogRow row;
            row.epoch = epoch;
            row.stage = stage_idx + 1;
            row.train_loss = loss_sum / static_cast<double>(seen);
            if (!val_samples_.empty()) {
                Network<float> vnet(params);
                auto [vloss, vacc] = val_runner.loss_and_accuracy(vnet, sample_ptrs(val_samples_), cfg_.threads);
                row.val_loss = vloss;
                row.val_accuracy = vacc;
            }
            log_.push_back(row);

            bool stop = false;
            if (use_early_stop) {
                if (row.val_loss < best_val - 1e-9) {
                    best_val = row.val_loss;
                    best_params = params;
                    since_best = 0;
                } else if (++since_best >= cfg_.early_stop_patience) {
                    stop = true;
                }
            }
            if (sched.loss_target > 0.0 && row.train_loss <= sched.loss_target) stop = true;
            if (stop) break;
        }
        // keep the best validation point seen during the stage
        if (use_early_stop && !log_.empty() && log_.back().val_loss > best_val) params = best_params;
    }

    TrainConfig cfg_;
    std::vector<LabeledCrop> train_;
    std::vector<LabeledCrop> val_;
    std::vector<Sample<float>> val_samples_;
    Rng rng_;
    std::vector<EpochLogRow> log_;
};

}  // namespace partdet
