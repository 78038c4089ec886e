#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

struct SamplePair {
    Tensor rgb;      // [3, H, W] in [0, 1]
    Tensor thermal;  // [1, H, W] in [0, 1]
    Tensor mask;     // [1, H, W], exactly 0 or 1
    std::string id;
};

/// Checks shapes, value ranges and mask binarity. Throws DataError.
void validate_sample(const SamplePair& s);

struct SynthParams {
    std::size_t size = 64;
    std::size_t min_cracks = 1;
    std::size_t max_cracks = 2;
    std::size_t min_length = 28;
    std::size_t max_length = 48;
    double step_jitter = 0.22;   // stddev of the heading change per step, radians
    double branch_probability = 0.015;
    double min_width = 2.0;
    double max_width = 3.0;
    double texture_amplitude = 0.10;
    double crack_darkening = 0.30;
    double thermal_contrast = 0.40;
    double thermal_blur = 1.2;  // gaussian sigma, pixels
    double rgb_noise = 0.04;
    double thermal_noise = 0.03;
    bool shadows = true;
    bool watermarks = true;

    /// ConfigError unless size >= 32, min_width >= 1 and all ranges ordered.
    void validate() const;
};

/// One deterministic crack scene.
SamplePair synth_generate(std::uint64_t seed, const SynthParams& params);

/// Sample `index` of a corpus; randomness depends only on (corpus_seed, index).
SamplePair synth_corpus_sample(std::uint64_t corpus_seed, std::size_t index, const SynthParams& params);

double foreground_fraction(const Tensor& mask);

enum class SplitRole { train, test };

struct SplitEntry {
    std::string stem;
    SplitRole role = SplitRole::train;
};

/// Writes rgb/, thermal/ and mask/ PNGs for one sample named by its id.
void write_sample(const std::filesystem::path& root, const SamplePair& sample);
void write_split(const std::filesystem::path& root, const std::vector<SplitEntry>& entries);
/// Missing split.txt yields an empty list.
std::vector<SplitEntry> read_split(const std::filesystem::path& root);

/// All matched stems in lexicographic order. Missing counterparts raise
/// DataError listing every offending stem; unreadable files raise IoError.
std::vector<SamplePair> load_dataset(const std::filesystem::path& root);

struct DatasetSplit {
    std::vector<SamplePair> train;
    std::vector<SamplePair> test;
};

/// load_dataset partitioned by split.txt; stems absent from the manifest are
/// treated as training data.
DatasetSplit load_split_dataset(const std::filesystem::path& root);

enum class FlipAxis { horizontal, vertical };

SamplePair flip(const SamplePair& s, FlipAxis axis);

/// rgb' = (rgb - 0.5) * contrast + 0.5 + brightness, clamped to [0, 1].
/// Thermal and mask are untouched.
SamplePair adjust_rgb(const SamplePair& s, double brightness, double contrast);

/// Bilinear for the images, nearest neighbour for the mask.
SamplePair resize_sample(const SamplePair& s, std::size_t height, std::size_t width);

struct AugmentParams {
    double flip_probability = 0.5;
    double brightness = 0.1;  // uniform in [-b, b]
    double contrast = 0.15;   // factor uniform in [1-c, 1+c]
};

/// Random flips on all three tensors, photometric jitter on RGB only, then a
/// resize to train_size x train_size when the sample differs.
SamplePair augment(const SamplePair& s, std::uint64_t seed, std::size_t train_size,
                   const AugmentParams& params = {});

struct Standardization {
    std::array<double, 3> rgb_mean{0.5, 0.5, 0.5};
    std::array<double, 3> rgb_std{1, 1, 1};
    double thermal_mean = 0.5;
    double thermal_std = 1;
};

/// Per-channel corpus mean / population std. UsageError on an empty corpus.
Standardization fit_standardization(const std::vector<SamplePair>& samples);
SamplePair standardize(const SamplePair& s, const Standardization& stats);

/// Resize to eval_size (if needed) then standardize. ConfigError if eval_size < 32.
SamplePair preprocess(const SamplePair& s, std::size_t eval_size, const Standardization& stats);

IRFF_END_NAMESPACE
