#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "irff/data.hpp"
#include "irff/image_io.hpp"
#include "irff/metrics.hpp"
#include "irff/model.hpp"
#include "irff/run_config.hpp"

IRFF_BEGIN_NAMESPACE

// ---- synth ----------------------------------------------------------------

struct CorpusStats {
    std::size_t train = 0;
    std::size_t test = 0;
    double mean_foreground = 0;
    double min_foreground = 0;
    double max_foreground = 0;
};

/// Generates cfg.train_count + cfg.test_count samples into `root` with a
/// split manifest. Samples [0, train_count) are training data.
CorpusStats write_synthetic_corpus(const std::filesystem::path& root, const RunConfig& cfg);

/// Same corpus, in memory.
DatasetSplit synthetic_corpus(const RunConfig& cfg);

// ---- train ----------------------------------------------------------------

struct EpochLog {
    std::size_t epoch = 0;
    double total = 0;
    double main = 0;
    double aux = 0;
    double topology = 0;
    double ce = 0;
    double dice = 0;
    double val_dice = 0;
};

std::string format_epoch_line(const EpochLog& e);

struct TrainResult {
    std::vector<EpochLog> epochs;
    double best_val_dice = -1;
    std::size_t best_epoch = 0;
    double train_dice = 0;
    double test_dice = 0;
    Standardization norm;
};

/// Parameter entries followed by the standardization statistics.
std::vector<NamedTensor> checkpoint_entries(const IhbsModel& model, const Standardization& norm);

/// Loads a checkpoint into a model built from `model_config`. Returns the
/// stored statistics. ConfigError names the first name or shape mismatch.
Standardization restore_checkpoint(const std::filesystem::path& path, IhbsModel& model);

struct TrainHooks {
    /// Called after every optimizer step; lets callers inspect gradients.
    std::function<void(std::size_t epoch, std::size_t step, const IhbsModel&)> after_backward;
};

/// Trains on `data.train`, validates on `data.test` each epoch. When
/// `out_dir` is non-empty writes config.txt (before epoch 1), train.log,
/// best.ckpt and final.ckpt there. Deterministic for a fixed config and
/// thread count. Returns the trained model through `model_out` if given.
TrainResult train(const RunConfig& cfg, const DatasetSplit& data, const std::filesystem::path& out_dir,
                  IhbsModel* model_out = nullptr, const TrainHooks& hooks = {});

// ---- eval -----------------------------------------------------------------

struct EvalResult {
    std::vector<std::string> ids;
    std::vector<MetricsReport> per_image;
    std::vector<MetricsReport> per_image_aux;
    MetricsReport summary;
    MetricsReport aux_summary;
};

/// Probability maps for one sample at eval_size.
SegOutput infer(const IhbsModel& model, const SamplePair& sample, const RunConfig& cfg);

/// UsageError on an empty sample list.
EvalResult evaluate(const IhbsModel& model, const std::vector<SamplePair>& samples, const RunConfig& cfg);

std::string per_image_csv(const EvalResult& result);

// ---- predict --------------------------------------------------------------

struct Prediction {
    Image mask;     // 1 channel, 0 or 255
    Image overlay;  // rgb with mask in red and its skeleton in green
    Tensor probability;
};

/// Aligned raw inputs in [0, 1]. ShapeError if their sizes differ.
Prediction predict(const IhbsModel& model, const RunConfig& cfg, const Tensor& rgb, const Tensor& thermal);

// ---- bench-attn -----------------------------------------------------------

struct BenchRow {
    std::size_t size = 0;
    std::size_t key_channels = 0;
    std::size_t value_channels = 0;
    std::size_t segments = 0;
    double naive_bytes = 0;
    double efficient_bytes = 0;
    double ratio = 0;
    bool measured = false;
    std::size_t measured_buffers = 0;
    std::size_t measured_bytes = 0;
    double naive_ms = 0;
    double efficient_ms = 0;
};

/// Analytic costs for every (size, channels, segments) combination; sizes up
/// to `max_measured` are also timed and instrumented.
std::vector<BenchRow> bench_attention(const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& channels,
                                      const std::vector<std::size_t>& segments, std::size_t max_measured = 64,
                                      std::size_t repeats = 3);

std::string bench_csv(const std::vector<BenchRow>& rows);

IRFF_END_NAMESPACE
