#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "patchblock/image.hpp"

namespace patchblock {

/// Tunables for the chunk -> features -> forest -> mitigate pipeline.
/// Defaults: 50-pixel kernel, half-overlap stride, 100 trees, 0.3 sample
/// fraction, 1% flagged fraction, 87.5% singular-value retention.
struct PipelineConfig {
    int kernel = 50;
    int stride = 25;
    int trees = 100;
    double sample_fraction = 0.3;
    double outlier_fraction = 0.01;  // fraction of chunks flagged, (1 - c)
    double info = 0.875;
    int bins = 32;
    int k_attrs = 0;  // 0 = scan all attributes
    std::uint64_t seed = 0;
    int batch_size = 4;
    int workers = 0;  // 0 = all hardware threads
};

struct StageTimings {
    double chunking = 0.0;
    double features = 0.0;
    double forest = 0.0;
    double scoring = 0.0;
    double mitigation = 0.0;
    double total = 0.0;
};

struct FlaggedChunk {
    int index = 0;
    double score = 0.0;
};

struct DefenseResult {
    ImageTensor output;
    std::vector<FlaggedChunk> anomalies;  // flagged chunks, score descending
    std::vector<double> scores;           // per-chunk anomaly scores
    int grid_rows = 0;
    int grid_cols = 0;
    bool passthrough = false;  // grid had < 2 chunks; image returned untouched
    StageTimings timings;
};

/// Number of chunks flagged for n scored chunks: round half-up of
/// outlier_fraction * n, floored at 1.
int flag_count(int n_chunks, double outlier_fraction);

/// Runs the full defense on one image. Deterministic for a fixed
/// (image, config, seed) at any worker count.
DefenseResult defend(const ImageTensor& image, const PipelineConfig& config);

struct BatchEntry {
    std::optional<DefenseResult> result;
    std::string error;  // non-empty iff this image failed

    bool ok() const { return result.has_value(); }
};

/// Maps defend over a batch; member images may run concurrently. A failing
/// image reports its error in its own slot without aborting the rest.
std::vector<BatchEntry> defend_batch(const std::vector<ImageTensor>& images,
                                     const PipelineConfig& config);

/// Grayscale mask of the flagged windows (255 = covered by a flagged chunk).
ImageTensor anomaly_mask(const DefenseResult& result, int height, int width, int kernel,
                         int stride);

/// Everything except the timing fields, serialized for equality checks.
std::vector<std::uint8_t> canonical_bytes(const DefenseResult& result);

/// Key = value config file, '#' comments. Unknown keys are errors.
PipelineConfig load_config_file(const std::string& path);
void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value);
void validate_config(const PipelineConfig& config);

}  // namespace patchblock
