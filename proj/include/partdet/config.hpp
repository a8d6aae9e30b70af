#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "partdet/common.hpp"
#include "partdet/deformation.hpp"
#include "partdet/visibility.hpp"

namespace partdet {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

// Flat key=value configuration with a fixed schema. '#' starts a comment,
// blank lines are skipped, unknown keys are rejected rather than ignored.
class Config {
public:
    static const std::vector<ConfigKey>& schema() {
        static const std::vector<ConfigKey> keys = build_schema();
        return keys;
    }

    static Config defaults() {
        Config cfg;
        for (const ConfigKey& k : schema()) cfg.values_[k.name] = k.default_value;
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown configuration key: " + key);
        it->second = value;
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::string line;
        int line_number = 0;
        while (std::getline(in, line)) {
            ++line_number;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            std::size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ParseError("config line " + std::to_string(line_number) + ": expected key=value");
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw ParseError("config line " + std::to_string(line_number) + ": empty key");
            try {
                set(key, value);
            } catch (const ConfigError& e) {
                throw ConfigError(std::string(e.what()) + " (line " + std::to_string(line_number) + ")");
            }
        }
    }

    // "key=value" override strings, e.g. from the command line.
    void apply_override(const std::string& assignment) {
        std::size_t eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    const std::string& get_string(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown configuration key: " + key);
        return it->second;
    }

    long get_int(const std::string& key) const {
        const std::string& v = get_string(key);
        try {
            std::size_t used = 0;
            long out = std::stol(v, &used);
            if (used != v.size()) throw ConfigError("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected integer, got '" + v + "'");
        }
    }

    double get_double(const std::string& key) const {
        const std::string& v = get_string(key);
        try {
            std::size_t used = 0;
            double out = std::stod(v, &used);
            if (used != v.size()) throw ConfigError("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": expected number, got '" + v + "'");
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get_string(key);
        if (v == "1" || v == "true" || v == "on") return true;
        if (v == "0" || v == "false" || v == "off") return false;
        throw ConfigError("config key " + key + ": expected boolean, got '" + v + "'");
    }

    DeformationMode deformation_mode() const {
        const std::string& v = get_string("deformation_mode");
        if (v == "quadratic") return DeformationMode::kQuadratic;
        if (v == "learned_map") return DeformationMode::kLearnedMap;
        throw ConfigError("deformation_mode must be 'quadratic' or 'learned_map', got '" + v + "'");
    }

    VisibilityMode visibility_mode() const {
        const std::string& v = get_string("visibility_mode");
        if (v == "hierarchical") return VisibilityMode::kHierarchical;
        if (v == "logistic") return VisibilityMode::kLogistic;
        throw ConfigError("visibility_mode must be 'hierarchical' or 'logistic', got '" + v + "'");
    }

    std::vector<PartSpec> part_layout() const {
        std::vector<PartSpec> parts;
        for (int p = 1; p <= kPartCount; ++p) {
            std::string prefix = "part" + std::to_string(p) + "_";
            PartSpec spec;
            spec.part_id = p;
            spec.level = static_cast<int>(get_int(prefix + "level"));
            spec.f_h = static_cast<int>(get_int(prefix + "fh"));
            spec.f_w = static_cast<int>(get_int(prefix + "fw"));
            spec.anchor_x = static_cast<int>(get_int(prefix + "ax"));
            spec.anchor_y = static_cast<int>(get_int(prefix + "ay"));
            spec.mirror_of = static_cast<int>(get_int(prefix + "mirror"));
            parts.push_back(spec);
        }
        try {
            validate_part_layout(parts);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("invalid part layout: ") + e.what());
        }
        return parts;
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static std::vector<ConfigKey> build_schema() {
        std::vector<ConfigKey> keys = {
            {"seed", "1", "master seed; all randomness derives from it"},
            {"threads", "1", "worker threads (results are thread-count independent)"},
            {"batch_size", "32", "minibatch size"},
            {"momentum", "0.9", "SGD momentum"},
            {"stage1_epochs", "20", "epochs for stage 1 (conv + linear readout)"},
            {"stage2_epochs", "20", "epochs for stage 2 (adds parts + deformation)"},
            {"stage3_epochs", "30", "epochs for stage 3 (adds visibility classifier)"},
            {"stage1_lr", "0.01", "learning rate for stage 1"},
            {"stage2_lr", "0.01", "learning rate for stage 2"},
            {"stage3_lr", "0.001", "learning rate for stage 3"},
            {"stage1_loss_target", "0", "stop stage 1 when training loss falls below (0 = off)"},
            {"stage2_loss_target", "0", "stop stage 2 when training loss falls below (0 = off)"},
            {"stage3_loss_target", "0", "stop stage 3 when training loss falls below (0 = off)"},
            {"augment", "1", "rotation augmentation on the training split"},
            {"augment_max_deg", "10", "augmentation rotation range, degrees"},
            {"augment_step_deg", "1", "augmentation rotation step, degrees"},
            {"deformation_mode", "quadratic", "deformation model: quadratic | learned_map"},
            {"visibility_mode", "hierarchical", "stage-3 classifier: hierarchical | logistic"},
            {"val_fraction", "0.1", "held-out fraction of sources for early stopping"},
            {"early_stop_patience", "5", "epochs without val improvement before stopping (0 = off)"},
            {"freeze_previous", "0", "freeze layers carried over from the previous stage"},
            {"eval_stride_r", "4", "sliding-window row stride"},
            {"eval_stride_c", "4", "sliding-window column stride"},
            {"nms_radius_r", "10", "non-max suppression row radius"},
            {"nms_radius_c", "25", "non-max suppression column radius"},
            {"match_tol_r", "10", "detection-to-truth row tolerance"},
            {"match_tol_c", "25", "detection-to-truth column tolerance"},
            {"detect_threshold", "0.5", "score threshold for the detect command"},
        };
        for (const PartSpec& p : default_part_layout()) {
            std::string prefix = "part" + std::to_string(p.part_id) + "_";
            keys.push_back({prefix + "level", std::to_string(p.level), "part level (1..3)"});
            keys.push_back({prefix + "fh", std::to_string(p.f_h), "part filter rows"});
            keys.push_back({prefix + "fw", std::to_string(p.f_w), "part filter cols"});
            keys.push_back({prefix + "ax", std::to_string(p.anchor_x), "anchor row in the part map"});
            keys.push_back({prefix + "ay", std::to_string(p.anchor_y), "anchor col in the part map"});
            keys.push_back({prefix + "mirror", std::to_string(p.mirror_of), "mirrored partner id (0 = none)"});
        }
        return keys;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace partdet
