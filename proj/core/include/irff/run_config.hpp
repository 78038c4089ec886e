#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "irff/data.hpp"
#include "irff/losses.hpp"
#include "irff/metrics.hpp"
#include "irff/model.hpp"
#include "irff/optim.hpp"

IRFF_BEGIN_NAMESPACE

/// Everything a run depends on. Every field has a default; the resolved
/// form is written next to the run's outputs and reloads to the same run.
struct RunConfig {
    std::string preset = "desk";
    std::string data_root;
    std::string output_dir = "run";
    std::uint64_t seed = 0;
    std::uint64_t data_seed = 1;
    std::size_t train_count = 200;
    std::size_t test_count = 40;
    SynthParams synth;
    ModelConfig model;
    LossWeights loss;
    AdamWOptions optim;
    std::size_t batch_size = 8;
    std::size_t epochs = 50;
    std::size_t train_size = 64;
    std::size_t eval_size = 64;
    bool augment = true;
    double threshold = kDefaultThreshold;
    Aggregation aggregation = Aggregation::micro;
    Standardization norm;

    /// ConfigError on any out-of-range value.
    void validate() const;
};

/// Named starting points: "desk" (CPU-scale synthetic runs) and
/// "paper-protocol" (batch 8, 150 epochs, weight decay 1e-4, 480 px).
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Sets one key from its text form. ConfigError names unknown keys and
/// unparsable values. Setting "preset" resets every other field.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// `key = value` lines; '#' starts a comment, blank lines are ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Resolved config in a stable key order.
std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

IRFF_END_NAMESPACE
