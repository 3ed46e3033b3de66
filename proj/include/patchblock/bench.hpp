#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchblock/image.hpp"
#include "patchblock/mi.hpp"
#include "patchblock/pipeline.hpp"

namespace patchblock {

enum class BaseKind { SmoothGradient, BandNoise, File };
enum class PatchKind { UniformNoise, Checkerboard, SolidBlock, None };

/// Recipe for one synthetic evaluation image: a clean base with an optional
/// planted patch whose exact bounds are the ground truth.
struct SyntheticSpec {
    BaseKind base = BaseKind::SmoothGradient;
    PatchKind patch = PatchKind::UniformNoise;
    int width = 224;
    int height = 224;
    int channels = 3;
    int patch_size = 50;
    int patch_x = -1;  // -1 = seeded random placement
    int patch_y = -1;
    std::uint64_t seed = 0;
    std::string file;  // base image path for BaseKind::File
};

struct PatchRect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool empty() const { return w <= 0 || h <= 0; }
};

struct SyntheticCase {
    ImageTensor image;
    PatchRect truth;  // empty when PatchKind::None
};

/// Deterministic image for a given spec; identical bytes for equal seeds.
SyntheticCase generate_case(const SyntheticSpec& spec);

/// Fraction of the truth rectangle covered by the flagged windows, on exact
/// pixel sets.
double flagged_overlap(const DefenseResult& result, const PatchRect& truth, int kernel,
                       int stride);

struct CaseReport {
    int index = 0;
    bool clean = false;
    bool ok = false;
    std::string error;
    double overlap = 0.0;
    bool detected = false;  // >= 50% of the patch area covered
    int flagged = 0;
    StageTimings timings;
};

struct EvalReport {
    std::vector<CaseReport> cases;
    int patched_cases = 0;
    int clean_cases = 0;
    int failed_cases = 0;
    bool recall_defined = false;
    double recall = 0.0;           // detected / patched
    double false_flag_rate = 0.0;  // mean flagged/chunks over clean cases
    double mean_total_seconds = 0.0;
    double p90_total_seconds = 0.0;
    double mean_stage_seconds[5] = {0, 0, 0, 0, 0};  // chunk/feat/forest/score/mitigate
};

/// Runs defend over the corpus and aggregates detection and runtime
/// statistics. Per-case errors land in the report without aborting the run.
/// With sequential_timing the cases run one at a time for clean timings;
/// otherwise they are evaluated concurrently.
EvalReport evaluate(const std::vector<SyntheticSpec>& corpus, const PipelineConfig& config,
                    bool sequential_timing = false);

/// Human-readable table and line-delimited JSON records of a report.
std::string format_report(const EvalReport& report);
std::string report_records(const EvalReport& report);

/// Parses a corpus description file (key = value) into concrete case specs.
std::vector<SyntheticSpec> load_corpus_file(const std::string& path);

struct ScalingPoint {
    int chunks = 0;
    double seconds = 0.0;
};

struct ScalingTable {
    std::vector<ScalingPoint> points;
    bool fit_defined = false;  // needs >= 2 distinct chunk counts
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

/// Measures localized feature-extraction wall time at each chunk count
/// (median of `repeats` runs) and fits seconds ~ slope * chunks + intercept.
ScalingTable scaling_run(const std::vector<int>& chunk_counts, const PipelineConfig& config,
                         int repeats = 3);

std::string format_scaling(const ScalingTable& table);

/// All-pairs MI feature reference: same statistics as extract_features but
/// against every other chunk instead of the neighbors. Quadratic by
/// construction; exists to demonstrate what the localized path avoids.
std::vector<ChunkFeatures> extract_features_allpairs(const ChunkGrid& grid,
                                                     const HistogramConfig& cfg, int workers = 1);

}  // namespace patchblock
