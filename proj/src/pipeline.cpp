#include "patchblock/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "patchblock/chunking.hpp"
#include "patchblock/errors.hpp"
#include "patchblock/iforest.hpp"
#include "patchblock/mi.hpp"
#include "patchblock/mitigation.hpp"
#include "patchblock/parallel.hpp"

namespace patchblock {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

int flag_count(int n_chunks, double outlier_fraction) {
    const long long r = std::llround(outlier_fraction * static_cast<double>(n_chunks));
    return r < 1 ? 1 : static_cast<int>(r);
}

DefenseResult defend(const ImageTensor& image, const PipelineConfig& config) {
    validate_config(config);
    if (!image.valid()) throw DimensionError("invalid image tensor");
    if (image.height < config.kernel || image.width < config.kernel)
        throw DimensionError("image is smaller than the kernel");

    const auto t_start = Clock::now();
    DefenseResult result;

    auto t0 = Clock::now();
    ChunkGrid grid = chunk_image(image, config.kernel, config.stride);
    result.timings.chunking = seconds_since(t0);
    result.grid_rows = grid.rows;
    result.grid_cols = grid.cols;

    if (grid.count() < 2) {
        // Localized MI is undefined on a single chunk; pass through untouched.
        result.output = image;
        result.passthrough = true;
        result.timings.total = seconds_since(t_start);
        return result;
    }

    t0 = Clock::now();
    const HistogramConfig hist{config.bins};
    const std::vector<ChunkFeatures> features = extract_features(grid, hist, config.workers);
    result.timings.features = seconds_since(t0);

    Matrix points(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) points[i] = features[i].features;

    t0 = Clock::now();
    const int n = grid.count();
    const int sample =
        std::clamp(static_cast<int>(std::llround(config.sample_fraction * n)), 2, n);
    const FastIsolationForest forest =
        build_forest(points, config.trees, sample, config.k_attrs, config.seed, config.workers);
    result.timings.forest = seconds_since(t0);

    t0 = Clock::now();
    result.scores = anomaly_scores(forest, points, config.workers);
    result.timings.scoring = seconds_since(t0);

    // Flag the top round((1-c)*n) chunks, minimum 1; ties break toward the
    // lower chunk index.
    const int flagged = std::min(flag_count(n, config.outlier_fraction), n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return result.scores[a] > result.scores[b];
    });
    result.anomalies.reserve(flagged);
    for (int i = 0; i < flagged; ++i)
        result.anomalies.push_back({order[i], result.scores[order[i]]});

    t0 = Clock::now();
    const RetentionPolicy policy{config.info};
    std::vector<Replacement> replacements(result.anomalies.size());
    parallel_for(result.anomalies.size(), config.workers, [&](std::size_t i) {
        const Chunk& chunk = grid.chunks[result.anomalies[i].index];
        replacements[i] =
            Replacement{chunk.top, chunk.left,
                        mitigate_chunk(chunk, config.kernel, grid.channels, policy)};
    });
    result.output = superimpose(image, replacements, config.kernel);
    result.timings.mitigation = seconds_since(t0);

    result.timings.total = seconds_since(t_start);
    return result;
}

std::vector<BatchEntry> defend_batch(const std::vector<ImageTensor>& images,
                                     const PipelineConfig& config) {
    if (images.empty()) throw ParameterError("empty batch");
    std::vector<BatchEntry> out(images.size());
    if (images.size() == 1) {
        try {
            out[0].result = defend(images[0], config);
        } catch (const std::exception& e) {
            out[0].error = e.what();
        }
        return out;
    }
    // Overlap member pipelines: one worker per image, each image sequential
    // inside. Results match a sequential map because defend is deterministic
    // at any worker count.
    PipelineConfig inner = config;
    inner.workers = 1;
    const int batch_workers = std::min<int>(resolve_workers(config.workers),
                                            static_cast<int>(images.size()));
    parallel_for(images.size(), batch_workers, [&](std::size_t i) {
        try {
            out[i].result = defend(images[i], inner);
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    });
    return out;
}

ImageTensor anomaly_mask(const DefenseResult& result, int height, int width, int kernel,
                         int stride) {
    ImageTensor mask = make_image(height, width, 1, 0);
    for (const FlaggedChunk& fc : result.anomalies) {
        const int row = fc.index / result.grid_cols;
        const int col = fc.index % result.grid_cols;
        const int top = row * stride;
        const int left = col * stride;
        for (int y = top; y < top + kernel && y < height; ++y)
            for (int x = left; x < left + kernel && x < width; ++x) mask.at(y, x, 0) = 255;
    }
    return mask;
}

std::vector<std::uint8_t> canonical_bytes(const DefenseResult& result) {
    std::vector<std::uint8_t> out;
    auto put_i64 = [&out](std::int64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    auto put_f64 = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        put_i64(static_cast<std::int64_t>(bits));
    };
    put_i64(result.output.height);
    put_i64(result.output.width);
    put_i64(result.output.channels);
    out.insert(out.end(), result.output.data.begin(), result.output.data.end());
    put_i64(result.grid_rows);
    put_i64(result.grid_cols);
    put_i64(result.passthrough ? 1 : 0);
    put_i64(static_cast<std::int64_t>(result.anomalies.size()));
    for (const FlaggedChunk& fc : result.anomalies) {
        put_i64(fc.index);
        put_f64(fc.score);
    }
    put_i64(static_cast<std::int64_t>(result.scores.size()));
    for (const double s : result.scores) put_f64(s);
    return out;
}

void validate_config(const PipelineConfig& config) {
    if (config.kernel < 1) throw ConfigError("kernel must be >= 1");
    if (config.stride < 1) throw ConfigError("stride must be >= 1");
    if (config.trees < 1) throw ConfigError("trees must be >= 1");
    if (!(config.sample_fraction > 0.0) || config.sample_fraction > 1.0)
        throw ConfigError("sample_fraction must lie in (0, 1]");
    if (!(config.outlier_fraction > 0.0) || !(config.outlier_fraction < 1.0))
        throw ConfigError("outlier_fraction must lie in (0, 1)");
    if (!(config.info > 0.0) || config.info > 1.0) throw ConfigError("info must lie in (0, 1]");
    if (config.bins < 2 || config.bins > 256) throw ConfigError("bins must be in [2, 256]");
    if (config.k_attrs < 0) throw ConfigError("k_attrs must be >= 0");
    if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (config.workers < 0) throw ConfigError("workers must be >= 0");
}

void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value) {
    auto as_int = [&](int lo) {
        std::size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(value, &pos);
        } catch (const std::exception&) {
            throw ConfigError("bad integer for '" + key + "': " + value);
        }
        if (pos != value.size()) throw ConfigError("bad integer for '" + key + "': " + value);
        if (v < lo) throw ConfigError("'" + key + "' must be >= " + std::to_string(lo));
        return v;
    };
    auto as_double = [&] {
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(value, &pos);
        } catch (const std::exception&) {
            throw ConfigError("bad number for '" + key + "': " + value);
        }
        if (pos != value.size()) throw ConfigError("bad number for '" + key + "': " + value);
        return v;
    };
    if (key == "kernel")
        config.kernel = as_int(1);
    else if (key == "stride")
        config.stride = as_int(1);
    else if (key == "trees")
        config.trees = as_int(1);
    else if (key == "sample_fraction")
        config.sample_fraction = as_double();
    else if (key == "outlier_fraction")
        config.outlier_fraction = as_double();
    else if (key == "info")
        config.info = as_double();
    else if (key == "bins")
        config.bins = as_int(2);
    else if (key == "k_attrs")
        config.k_attrs = as_int(0);
    else if (key == "seed") {
        std::size_t pos = 0;
        try {
            config.seed = std::stoull(value, &pos);
        } catch (const std::exception&) {
            throw ConfigError("bad seed: " + value);
        }
        if (pos != value.size() || value[0] == '-') throw ConfigError("bad seed: " + value);
    }
    else if (key == "batch_size")
        config.batch_size = as_int(1);
    else if (key == "workers")
        config.workers = as_int(0);
    else
        throw ConfigError("unknown config key: " + key);
}

PipelineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    PipelineConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const char* ws = " \t\r\n";
            const std::size_t b = s.find_first_not_of(ws);
            if (b == std::string::npos) return std::string();
            const std::size_t e = s.find_last_not_of(ws);
            return s.substr(b, e - b + 1);
        };
        const std::string trimmed = trim(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        apply_config_entry(config, key, value);
    }
    validate_config(config);
    return config;
}

}  // namespace patchblock
