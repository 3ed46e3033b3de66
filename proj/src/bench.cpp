#include "patchblock/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "patchblock/chunking.hpp"
#include "patchblock/errors.hpp"
#include "patchblock/parallel.hpp"
#include "patchblock/rng.hpp"

namespace patchblock {
namespace {

using Clock = std::chrono::steady_clock;

// Separate derived streams so base content, patch placement and patch
// content stay independent of each other.
constexpr std::uint64_t kBaseStream = 1;
constexpr std::uint64_t kPlacementStream = 2;
constexpr std::uint64_t kPatchStream = 3;

ImageTensor make_base(const SyntheticSpec& spec) {
    if (spec.base == BaseKind::File) {
        if (spec.file.empty()) throw ParameterError("file base needs a path");
        return load_image(spec.file);
    }
    ImageTensor image = make_image(spec.height, spec.width, spec.channels);
    const int h = image.height, w = image.width;
    if (spec.base == BaseKind::SmoothGradient) {
        // Axis-aligned ramps; each channel plane has rank 1, which SVD
        // mitigation reconstructs exactly.
        for (int c = 0; c < image.channels; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    int v = 0;
                    if (c == 0)
                        v = w > 1 ? (255 * x + (w - 1) / 2) / (w - 1) : 0;
                    else if (c == 1)
                        v = 255 - (w > 1 ? (255 * x + (w - 1) / 2) / (w - 1) : 0);
                    else
                        v = h > 1 ? (255 * y + (h - 1) / 2) / (h - 1) : 0;
                    image.at(y, x, c) = static_cast<std::uint8_t>(v);
                }
            }
        }
        return image;
    }
    // Band-limited noise: white noise smoothed by two 3x3 box passes, so the
    // correlation length stays far below the chunk stride.
    Rng rng(derive_seed(spec.seed, kBaseStream));
    std::vector<int> plane(static_cast<std::size_t>(h) * w);
    std::vector<int> tmp(plane.size());
    for (int c = 0; c < image.channels; ++c) {
        for (auto& p : plane) p = static_cast<int>(rng.below(256));
        for (int pass = 0; pass < 2; ++pass) {
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int x0 = x > 0 ? x - 1 : 0, x1 = x < w - 1 ? x + 1 : w - 1;
                    tmp[y * w + x] =
                        (plane[y * w + x0] + plane[y * w + x] + plane[y * w + x1] + 1) / 3;
                }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const int y0 = y > 0 ? y - 1 : 0, y1 = y < h - 1 ? y + 1 : h - 1;
                    plane[y * w + x] =
                        (tmp[y0 * w + x] + tmp[y * w + x] + tmp[y1 * w + x] + 1) / 3;
                }
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(plane[y * w + x], 0, 255));
    }
    return image;
}

}  // namespace

SyntheticCase generate_case(const SyntheticSpec& spec) {
    if (spec.base != BaseKind::File &&
        (spec.width < 1 || spec.height < 1 || (spec.channels != 1 && spec.channels != 3)))
        throw ParameterError("bad synthetic image dimensions");

    SyntheticCase out;
    out.image = make_base(spec);
    if (spec.patch == PatchKind::None) return out;

    const int ps = spec.patch_size;
    const int h = out.image.height, w = out.image.width;
    if (ps < 1 || ps > h || ps > w) throw ParameterError("patch does not fit inside the image");

    int px = spec.patch_x, py = spec.patch_y;
    if (px < 0 || py < 0) {
        Rng place(derive_seed(spec.seed, kPlacementStream));
        px = static_cast<int>(place.below(static_cast<std::uint64_t>(w - ps + 1)));
        py = static_cast<int>(place.below(static_cast<std::uint64_t>(h - ps + 1)));
    }
    if (px + ps > w || py + ps > h) throw ParameterError("patch does not fit inside the image");

    Rng content(derive_seed(spec.seed, kPatchStream));
    for (int y = py; y < py + ps; ++y) {
        for (int x = px; x < px + ps; ++x) {
            for (int c = 0; c < out.image.channels; ++c) {
                std::uint8_t v = 0;
                switch (spec.patch) {
                    case PatchKind::UniformNoise:
                        v = static_cast<std::uint8_t>(content.below(256));
                        break;
                    case PatchKind::Checkerboard:
                        v = (((x - px) / 5 + (y - py) / 5) % 2) ? 255 : 0;
                        break;
                    case PatchKind::SolidBlock:
                        v = 255;
                        break;
                    case PatchKind::None:
                        break;
                }
                out.image.at(y, x, c) = v;
            }
        }
    }
    out.truth = PatchRect{px, py, ps, ps};
    return out;
}

double flagged_overlap(const DefenseResult& result, const PatchRect& truth, int kernel,
                       int stride) {
    if (truth.empty()) return 0.0;
    std::vector<std::uint8_t> covered(static_cast<std::size_t>(truth.w) * truth.h, 0);
    for (const FlaggedChunk& fc : result.anomalies) {
        const int row = fc.index / result.grid_cols;
        const int col = fc.index % result.grid_cols;
        const int top = row * stride;
        const int left = col * stride;
        const int y0 = std::max(top, truth.y), y1 = std::min(top + kernel, truth.y + truth.h);
        const int x0 = std::max(left, truth.x), x1 = std::min(left + kernel, truth.x + truth.w);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                covered[static_cast<std::size_t>(y - truth.y) * truth.w + (x - truth.x)] = 1;
    }
    std::size_t hit = 0;
    for (const std::uint8_t c : covered) hit += c;
    return static_cast<double>(hit) / static_cast<double>(covered.size());
}

EvalReport evaluate(const std::vector<SyntheticSpec>& corpus, const PipelineConfig& config,
                    bool sequential_timing) {
    if (corpus.empty()) throw ParameterError("empty corpus");
    EvalReport report;
    report.cases.resize(corpus.size());

    PipelineConfig inner = config;
    int case_workers = 1;
    if (sequential_timing) {
        // One case at a time, pipeline may use all workers.
    } else {
        inner.workers = 1;
        case_workers = resolve_workers(config.workers);
    }

    parallel_for(corpus.size(), case_workers, [&](std::size_t i) {
        CaseReport& cr = report.cases[i];
        cr.index = static_cast<int>(i);
        cr.clean = corpus[i].patch == PatchKind::None;
        try {
            const SyntheticCase c = generate_case(corpus[i]);
            const DefenseResult res = defend(c.image, inner);
            cr.ok = true;
            cr.flagged = static_cast<int>(res.anomalies.size());
            cr.timings = res.timings;
            if (!cr.clean) {
                cr.overlap = flagged_overlap(res, c.truth, config.kernel, config.stride);
                cr.detected = cr.overlap >= 0.5;
            }
        } catch (const std::exception& e) {
            cr.error = e.what();
        }
    });

    std::vector<double> totals;
    int detected = 0;
    double false_flag_sum = 0.0;
    for (std::size_t i = 0; i < report.cases.size(); ++i) {
        const CaseReport& cr = report.cases[i];
        if (!cr.ok) {
            ++report.failed_cases;
            continue;
        }
        totals.push_back(cr.timings.total);
        report.mean_stage_seconds[0] += cr.timings.chunking;
        report.mean_stage_seconds[1] += cr.timings.features;
        report.mean_stage_seconds[2] += cr.timings.forest;
        report.mean_stage_seconds[3] += cr.timings.scoring;
        report.mean_stage_seconds[4] += cr.timings.mitigation;
        if (cr.clean) {
            ++report.clean_cases;
            const SyntheticSpec& spec = corpus[i];
            const int rows = (spec.height - config.kernel) / config.stride + 1;
            const int cols = (spec.width - config.kernel) / config.stride + 1;
            const int n = std::max(1, rows * cols);
            false_flag_sum += static_cast<double>(cr.flagged) / static_cast<double>(n);
        } else {
            ++report.patched_cases;
            if (cr.detected) ++detected;
        }
    }
    if (!totals.empty()) {
        double sum = 0.0;
        for (const double t : totals) sum += t;
        report.mean_total_seconds = sum / static_cast<double>(totals.size());
        std::sort(totals.begin(), totals.end());
        const std::size_t idx =
            static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(totals.size())));
        report.p90_total_seconds = totals[std::min(totals.size() - 1, idx == 0 ? 0 : idx - 1)];
        for (double& s : report.mean_stage_seconds) s /= static_cast<double>(totals.size());
    }
    if (report.patched_cases > 0) {
        report.recall_defined = true;
        report.recall = static_cast<double>(detected) / static_cast<double>(report.patched_cases);
    }
    if (report.clean_cases > 0)
        report.false_flag_rate = false_flag_sum / static_cast<double>(report.clean_cases);
    return report;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    char line[160];
    os << "case  kind     ok  overlap  detected  flagged  total_ms\n";
    for (const CaseReport& cr : report.cases) {
        std::snprintf(line, sizeof line, "%-5d %-8s %-3s %7.3f  %-8s %7d  %8.2f%s%s\n", cr.index,
                      cr.clean ? "clean" : "patched", cr.ok ? "yes" : "no", cr.overlap,
                      cr.clean ? "-" : (cr.detected ? "yes" : "no"), cr.flagged,
                      cr.timings.total * 1e3, cr.error.empty() ? "" : "  error: ",
                      cr.error.c_str());
        os << line;
    }
    os << '\n';
    if (report.recall_defined)
        std::snprintf(line, sizeof line, "recall: %.4f over %d patched cases\n", report.recall,
                      report.patched_cases);
    else
        std::snprintf(line, sizeof line, "recall: N/A (no patched cases)\n");
    os << line;
    std::snprintf(line, sizeof line, "false-flag rate: %.4f over %d clean cases\n",
                  report.false_flag_rate, report.clean_cases);
    os << line;
    std::snprintf(line, sizeof line,
                  "runtime: mean %.4f s, p90 %.4f s (stages chunk %.4f feat %.4f forest %.4f "
                  "score %.4f mitigate %.4f)\n",
                  report.mean_total_seconds, report.p90_total_seconds,
                  report.mean_stage_seconds[0], report.mean_stage_seconds[1],
                  report.mean_stage_seconds[2], report.mean_stage_seconds[3],
                  report.mean_stage_seconds[4]);
    os << line;
    if (report.failed_cases > 0) os << "failed cases: " << report.failed_cases << '\n';
    return os.str();
}

std::string report_records(const EvalReport& report) {
    std::ostringstream os;
    for (const CaseReport& cr : report.cases) {
        nlohmann::json j;
        j["type"] = "case";
        j["index"] = cr.index;
        j["kind"] = cr.clean ? "clean" : "patched";
        j["ok"] = cr.ok;
        if (!cr.error.empty()) j["error"] = cr.error;
        if (!cr.clean) {
            j["overlap"] = cr.overlap;
            j["detected"] = cr.detected;
        }
        j["flagged"] = cr.flagged;
        j["seconds"] = cr.timings.total;
        os << j.dump() << '\n';
    }
    nlohmann::json agg;
    agg["type"] = "aggregate";
    agg["cases"] = report.cases.size();
    agg["patched_cases"] = report.patched_cases;
    agg["clean_cases"] = report.clean_cases;
    agg["failed_cases"] = report.failed_cases;
    if (report.recall_defined)
        agg["recall"] = report.recall;
    else
        agg["recall"] = "N/A";
    agg["false_flag_rate"] = report.false_flag_rate;
    agg["mean_total_seconds"] = report.mean_total_seconds;
    agg["p90_total_seconds"] = report.p90_total_seconds;
    agg["mean_stage_seconds"] = {report.mean_stage_seconds[0], report.mean_stage_seconds[1],
                                 report.mean_stage_seconds[2], report.mean_stage_seconds[3],
                                 report.mean_stage_seconds[4]};
    os << agg.dump() << '\n';
    return os.str();
}

std::vector<SyntheticSpec> load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);

    int cases = 0, width = 224, height = 224, channels = 3, patch_size = 50;
    std::uint64_t seed = 0;
    std::vector<BaseKind> bases{BaseKind::SmoothGradient, BaseKind::BandNoise};
    std::vector<PatchKind> patches{PatchKind::UniformNoise, PatchKind::Checkerboard};

    auto parse_bases = [](const std::string& csv) {
        std::vector<BaseKind> out;
        std::stringstream ss(csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok == "smooth")
                out.push_back(BaseKind::SmoothGradient);
            else if (tok == "noise")
                out.push_back(BaseKind::BandNoise);
            else
                throw ConfigError("unknown base kind: " + tok);
        }
        if (out.empty()) throw ConfigError("empty base list");
        return out;
    };
    auto parse_patches = [](const std::string& csv) {
        std::vector<PatchKind> out;
        std::stringstream ss(csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok == "noise")
                out.push_back(PatchKind::UniformNoise);
            else if (tok == "checker")
                out.push_back(PatchKind::Checkerboard);
            else if (tok == "solid")
                out.push_back(PatchKind::SolidBlock);
            else if (tok == "none")
                out.push_back(PatchKind::None);
            else
                throw ConfigError("unknown patch kind: " + tok);
        }
        if (out.empty()) throw ConfigError("empty patch list");
        return out;
    };

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string key, eq, value;
        std::istringstream ls(line);
        if (!(ls >> key)) continue;
        if (!(ls >> eq >> value) || eq != "=")
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        if (key == "cases")
            cases = std::stoi(value);
        else if (key == "width")
            width = std::stoi(value);
        else if (key == "height")
            height = std::stoi(value);
        else if (key == "channels")
            channels = std::stoi(value);
        else if (key == "patch_size")
            patch_size = std::stoi(value);
        else if (key == "seed")
            seed = std::stoull(value);
        else if (key == "bases")
            bases = parse_bases(value);
        else if (key == "patches")
            patches = parse_patches(value);
        else
            throw ConfigError("unknown corpus key: " + key);
    }
    if (cases < 1) throw ConfigError("corpus needs cases >= 1");

    std::vector<SyntheticSpec> corpus;
    corpus.reserve(cases);
    const std::size_t combos = bases.size() * patches.size();
    for (int i = 0; i < cases; ++i) {
        SyntheticSpec spec;
        const std::size_t combo = static_cast<std::size_t>(i) % combos;
        spec.base = bases[combo % bases.size()];
        spec.patch = patches[combo / bases.size()];
        spec.width = width;
        spec.height = height;
        spec.channels = channels;
        spec.patch_size = patch_size;
        spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        corpus.push_back(spec);
    }
    return corpus;
}

ScalingTable scaling_run(const std::vector<int>& chunk_counts, const PipelineConfig& config,
                         int repeats) {
    if (chunk_counts.empty()) throw ParameterError("no chunk counts given");
    if (repeats < 1) repeats = 1;
    ScalingTable table;
    const HistogramConfig hist{config.bins};

    for (const int n : chunk_counts) {
        if (n < 2) throw ParameterError("chunk counts must be >= 2");
        // Closest grid: rows x cols with rows*cols >= n, square when n is a
        // perfect square.
        int rows = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(n)))));
        const int cols = (n + rows - 1) / rows;
        SyntheticSpec spec;
        spec.base = BaseKind::BandNoise;
        spec.patch = PatchKind::None;
        spec.height = config.kernel + (rows - 1) * config.stride;
        spec.width = config.kernel + (cols - 1) * config.stride;
        spec.channels = 3;
        spec.seed = derive_seed(config.seed, static_cast<std::uint64_t>(n));
        const SyntheticCase c = generate_case(spec);
        const ChunkGrid grid = chunk_image(c.image, config.kernel, config.stride);

        std::vector<double> times(repeats);
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = Clock::now();
            extract_features(grid, hist, config.workers);
            times[r] = std::chrono::duration<double>(Clock::now() - t0).count();
        }
        std::sort(times.begin(), times.end());
        table.points.push_back({grid.count(), times[repeats / 2]});
    }

    // Least-squares line over (chunks, seconds).
    std::vector<ScalingPoint> distinct = table.points;
    std::sort(distinct.begin(), distinct.end(),
              [](const ScalingPoint& a, const ScalingPoint& b) { return a.chunks < b.chunks; });
    distinct.erase(std::unique(distinct.begin(), distinct.end(),
                               [](const ScalingPoint& a, const ScalingPoint& b) {
                                   return a.chunks == b.chunks;
                               }),
                   distinct.end());
    if (distinct.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const double m = static_cast<double>(table.points.size());
        for (const auto& p : table.points) {
            sx += p.chunks;
            sy += p.seconds;
            sxx += static_cast<double>(p.chunks) * p.chunks;
            sxy += p.chunks * p.seconds;
        }
        const double denom = m * sxx - sx * sx;
        table.slope = (m * sxy - sx * sy) / denom;
        table.intercept = (sy - table.slope * sx) / m;
        double ss_res = 0, ss_tot = 0;
        const double mean_y = sy / m;
        for (const auto& p : table.points) {
            const double fit = table.slope * p.chunks + table.intercept;
            ss_res += (p.seconds - fit) * (p.seconds - fit);
            ss_tot += (p.seconds - mean_y) * (p.seconds - mean_y);
        }
        table.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
        table.fit_defined = true;
    }
    return table;
}

std::string format_scaling(const ScalingTable& table) {
    std::ostringstream os;
    char line[128];
    os << "chunks  seconds\n";
    for (const auto& p : table.points) {
        std::snprintf(line, sizeof line, "%6d  %.6f\n", p.chunks, p.seconds);
        os << line;
    }
    if (table.fit_defined) {
        std::snprintf(line, sizeof line, "linear fit: %.3e s/chunk + %.3e s, R^2 = %.4f\n",
                      table.slope, table.intercept, table.r_squared);
        os << line;
    } else {
        os << "linear fit: N/A (need at least two distinct chunk counts)\n";
    }
    return os.str();
}

std::vector<ChunkFeatures> extract_features_allpairs(const ChunkGrid& grid,
                                                     const HistogramConfig& cfg, int workers) {
    if (grid.count() < 2)
        throw DegenerateGridError("feature extraction needs a grid with at least 2 chunks");
    const std::size_t block_plane = static_cast<std::size_t>(grid.kernel) * grid.kernel;
    std::vector<ChunkFeatures> out(grid.count());
    parallel_for(grid.chunks.size(), workers, [&](std::size_t i) {
        ChunkFeatures cf;
        cf.chunk_index = static_cast<int>(i);
        for (int ch = 0; ch < grid.channels; ++ch) {
            std::span<const std::uint8_t> self(grid.chunks[i].pixels.data() + ch * block_plane,
                                               block_plane);
            double sum = 0.0, lo = 0.0, hi = 0.0;
            bool first = true;
            for (int j = 0; j < grid.count(); ++j) {
                if (j == static_cast<int>(i)) continue;
                std::span<const std::uint8_t> other(grid.chunks[j].pixels.data() + ch * block_plane,
                                                    block_plane);
                const double mi = mutual_information(self, other, cfg);
                sum += mi;
                lo = first ? mi : std::min(lo, mi);
                hi = first ? mi : std::max(hi, mi);
                first = false;
            }
            cf.features.push_back(sum / static_cast<double>(grid.count() - 1));
            cf.features.push_back(lo);
            cf.features.push_back(hi);
        }
        out[i] = std::move(cf);
    });
    return out;
}

}  // namespace patchblock
