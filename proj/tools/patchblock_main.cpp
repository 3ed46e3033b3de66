// patchblock CLI: defend images, score chunks, generate synthetic cases, and
// run the evaluation harness.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "patchblock/bench.hpp"
#include "patchblock/chunking.hpp"
#include "patchblock/errors.hpp"
#include "patchblock/image.hpp"
#include "patchblock/pipeline.hpp"
#include "patchblock/rng.hpp"

namespace {

// Exit codes (also listed in --help): 0 success, 2 usage, 3 config/parameter,
// 4 I/O or file format, 5 numeric failure, 1 internal.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitNumeric = 5;

using patchblock::PipelineConfig;

// Writes through a temp file in the same directory so a failed run never
// leaves a partial output behind.
std::string temp_sibling(const std::string& path) {
    const std::filesystem::path p(path);
    std::uint64_t state = std::hash<std::string>{}(path) ^
                          static_cast<std::uint64_t>(
                              std::chrono::steady_clock::now().time_since_epoch().count());
    const std::uint64_t tag = patchblock::splitmix64(state);
    std::filesystem::path tmp = p.parent_path() / (".tmp" + std::to_string(tag % 1000000) + "-" +
                                                   p.filename().string());
    return tmp.string();
}

void save_image_atomic(const patchblock::ImageTensor& image, const std::string& path) {
    const std::string tmp = temp_sibling(path);
    try {
        patchblock::save_image(image, tmp);
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

void save_text_atomic(const std::string& text, const std::string& path) {
    const std::string tmp = temp_sibling(path);
    try {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw patchblock::IoError("cannot open for writing: " + path);
        out << text;
        out.flush();
        if (!out) throw patchblock::IoError("short write: " + path);
        out.close();
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

// Config layering: defaults, then the config file, then explicit flags.
struct ConfigCli {
    std::string config_file;
    int kernel = 0, stride = 0, trees = 0, bins = 0, k_attrs = 0, workers = 0, batch_size = 0;
    double sample_fraction = 0.0, outlier_fraction = 0.0, info = 0.0;
    std::uint64_t seed = 0;
    CLI::Option *o_kernel = nullptr, *o_stride = nullptr, *o_trees = nullptr, *o_bins = nullptr,
                *o_kattrs = nullptr, *o_workers = nullptr, *o_batch = nullptr,
                *o_sample = nullptr, *o_outlier = nullptr, *o_info = nullptr, *o_seed = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_file, "Config file (key = value lines)");
        o_kernel = cmd->add_option("--kernel", kernel, "Moving-window size in pixels");
        o_stride = cmd->add_option("--stride", stride, "Moving-window stride in pixels");
        o_trees = cmd->add_option("--trees", trees, "Isolation forest ensemble size");
        o_sample = cmd->add_option("--sample-fraction", sample_fraction,
                                   "Per-tree subsample fraction of the chunk count");
        o_outlier = cmd->add_option("--outlier-fraction", outlier_fraction,
                                    "Fraction of chunks flagged as anomalous");
        o_info = cmd->add_option("--info", info, "Singular-value mass retained per chunk");
        o_bins = cmd->add_option("--bins", bins, "Histogram bins per channel");
        o_kattrs = cmd->add_option("--k-attrs", k_attrs,
                                   "Attributes scanned per split (0 = all)");
        o_seed = cmd->add_option("--seed", seed, "RNG seed");
        o_batch = cmd->add_option("--batch-size", batch_size, "Images per processing batch");
        o_workers = cmd->add_option("--workers", workers, "Worker threads (0 = all cores)");
    }

    PipelineConfig resolve() const {
        PipelineConfig cfg;
        if (!config_file.empty()) cfg = patchblock::load_config_file(config_file);
        if (*o_kernel) cfg.kernel = kernel;
        if (*o_stride) cfg.stride = stride;
        if (*o_trees) cfg.trees = trees;
        if (*o_sample) cfg.sample_fraction = sample_fraction;
        if (*o_outlier) cfg.outlier_fraction = outlier_fraction;
        if (*o_info) cfg.info = info;
        if (*o_bins) cfg.bins = bins;
        if (*o_kattrs) cfg.k_attrs = k_attrs;
        if (*o_seed) cfg.seed = seed;
        if (*o_batch) cfg.batch_size = batch_size;
        if (*o_workers) cfg.workers = workers;
        patchblock::validate_config(cfg);
        return cfg;
    }
};

void print_timings(const patchblock::StageTimings& t) {
    std::printf("chunking   %.6f s\n", t.chunking);
    std::printf("features   %.6f s\n", t.features);
    std::printf("forest     %.6f s\n", t.forest);
    std::printf("scoring    %.6f s\n", t.scoring);
    std::printf("mitigation %.6f s\n", t.mitigation);
    std::printf("total      %.6f s\n", t.total);
}

int run_defend(const std::string& in_path, const std::string& out_path,
               const std::string& mask_path, const PipelineConfig& cfg, bool verbose) {
    const patchblock::ImageTensor image = patchblock::load_image(in_path);
    if (verbose)
        std::fprintf(stderr, "loaded %dx%dx%d from %s\n", image.height, image.width,
                     image.channels, in_path.c_str());
    const patchblock::DefenseResult result = patchblock::defend(image, cfg);
    if (result.passthrough)
        std::fprintf(stderr, "warning: grid has fewer than 2 chunks; image passed through\n");
    save_image_atomic(result.output, out_path);
    if (!mask_path.empty()) {
        const patchblock::ImageTensor mask = patchblock::anomaly_mask(
            result, image.height, image.width, cfg.kernel, cfg.stride);
        save_image_atomic(mask, mask_path);
    }
    print_timings(result.timings);
    std::printf("flagged %zu of %d chunks\n", result.anomalies.size(),
                result.grid_rows * result.grid_cols);
    return kExitOk;
}

int run_score(const std::string& in_path, const PipelineConfig& cfg) {
    const patchblock::ImageTensor image = patchblock::load_image(in_path);
    const patchblock::DefenseResult result = patchblock::defend(image, cfg);
    if (result.passthrough) {
        std::fprintf(stderr, "warning: grid has fewer than 2 chunks; no scores\n");
        return kExitOk;
    }
    // Rows sorted by score descending, ties toward the lower chunk index.
    std::vector<int> order(result.scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return result.scores[a] > result.scores[b];
    });
    for (const int idx : order)
        std::printf("%d %d %d %.12g\n", idx, idx / result.grid_cols, idx % result.grid_cols,
                    result.scores[idx]);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patchblock: pre-filters images by flagging statistically anomalous chunks "
                 "and rebuilding them from a reduced-rank reconstruction"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 ok, 2 usage, 3 config/parameter, 4 I/O or format, 5 numeric.");

    // defend
    auto* defend_cmd =
        app.add_subcommand("defend", "Detect and neutralize patch-like regions in one image");
    std::string defend_in, defend_out, defend_mask;
    bool defend_verbose = false;
    defend_cmd->add_option("-i,--in", defend_in, "Input image (PNG or binary PPM/PGM)")
        ->required();
    defend_cmd->add_option("-o,--out", defend_out, "Output image path (.png/.ppm/.pgm)")
        ->required();
    defend_cmd->add_option("--mask", defend_mask, "Also write the flagged-window mask here");
    defend_cmd->add_flag("-v,--verbose", defend_verbose, "Chatty diagnostics on stderr");
    ConfigCli defend_cfg;
    defend_cfg.attach(defend_cmd);

    // score
    auto* score_cmd =
        app.add_subcommand("score", "Print per-chunk anomaly scores (index row col score)");
    std::string score_in;
    score_cmd->add_option("-i,--in", score_in, "Input image (PNG or binary PPM/PGM)")->required();
    ConfigCli score_cfg;
    score_cfg.attach(score_cmd);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic evaluation image");
    std::string synth_out, synth_truth, synth_base = "smooth", synth_patch = "noise",
                           synth_file;
    int synth_w = 224, synth_h = 224, synth_c = 3, synth_ps = 50, synth_px = -1, synth_py = -1;
    std::uint64_t synth_seed = 0;
    synth_cmd->add_option("-o,--out", synth_out, "Output image path")->required();
    synth_cmd->add_option("--base", synth_base, "Base kind: smooth|noise|file")
        ->check(CLI::IsMember({"smooth", "noise", "file"}));
    synth_cmd->add_option("--file", synth_file, "Base image path when --base file");
    synth_cmd->add_option("--patch", synth_patch, "Patch kind: noise|checker|solid|none")
        ->check(CLI::IsMember({"noise", "checker", "solid", "none"}));
    synth_cmd->add_option("--width", synth_w, "Image width");
    synth_cmd->add_option("--height", synth_h, "Image height");
    synth_cmd->add_option("--channels", synth_c, "1 or 3");
    synth_cmd->add_option("--patch-size", synth_ps, "Patch side in pixels");
    synth_cmd->add_option("--patch-x", synth_px, "Patch left (default: seeded random)");
    synth_cmd->add_option("--patch-y", synth_py, "Patch top (default: seeded random)");
    synth_cmd->add_option("--seed", synth_seed, "RNG seed");
    synth_cmd->add_option("--truth", synth_truth, "Write ground-truth rect (x y w h) here");

    // bench
    auto* bench_cmd =
        app.add_subcommand("bench", "Run a corpus evaluation or a scaling measurement");
    std::string bench_corpus, bench_report, bench_scaling;
    bool bench_seq = false;
    bench_cmd->add_option("--corpus", bench_corpus, "Corpus description file");
    bench_cmd->add_option("-r,--report", bench_report, "Write line-delimited JSON records here");
    bench_cmd->add_option("--scaling", bench_scaling,
                          "Comma-separated chunk counts for a scaling run");
    bench_cmd->add_flag("--sequential-timing", bench_seq,
                        "Evaluate cases one at a time for clean timings");
    ConfigCli bench_cfg;
    bench_cfg.attach(bench_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (app.got_subcommand(defend_cmd))
            return run_defend(defend_in, defend_out, defend_mask, defend_cfg.resolve(),
                              defend_verbose);

        if (app.got_subcommand(score_cmd)) return run_score(score_in, score_cfg.resolve());

        if (app.got_subcommand(synth_cmd)) {
            patchblock::SyntheticSpec spec;
            spec.base = synth_base == "smooth"  ? patchblock::BaseKind::SmoothGradient
                        : synth_base == "noise" ? patchblock::BaseKind::BandNoise
                                                : patchblock::BaseKind::File;
            spec.patch = synth_patch == "noise"     ? patchblock::PatchKind::UniformNoise
                         : synth_patch == "checker" ? patchblock::PatchKind::Checkerboard
                         : synth_patch == "solid"   ? patchblock::PatchKind::SolidBlock
                                                    : patchblock::PatchKind::None;
            spec.width = synth_w;
            spec.height = synth_h;
            spec.channels = synth_c;
            spec.patch_size = synth_ps;
            spec.patch_x = synth_px;
            spec.patch_y = synth_py;
            spec.seed = synth_seed;
            spec.file = synth_file;
            const patchblock::SyntheticCase c = patchblock::generate_case(spec);
            save_image_atomic(c.image, synth_out);
            if (!c.truth.empty())
                std::printf("patch %d %d %d %d\n", c.truth.x, c.truth.y, c.truth.w, c.truth.h);
            if (!synth_truth.empty()) {
                std::ostringstream os;
                os << c.truth.x << ' ' << c.truth.y << ' ' << c.truth.w << ' ' << c.truth.h
                   << '\n';
                save_text_atomic(os.str(), synth_truth);
            }
            return kExitOk;
        }

        if (app.got_subcommand(bench_cmd)) {
            const PipelineConfig cfg = bench_cfg.resolve();
            if (!bench_scaling.empty()) {
                std::vector<int> counts;
                std::stringstream ss(bench_scaling);
                std::string tok;
                while (std::getline(ss, tok, ',')) counts.push_back(std::stoi(tok));
                const patchblock::ScalingTable table = patchblock::scaling_run(counts, cfg);
                const std::string text = patchblock::format_scaling(table);
                std::fputs(text.c_str(), stdout);
                if (!bench_report.empty()) save_text_atomic(text, bench_report);
                return kExitOk;
            }
            if (bench_corpus.empty())
                throw patchblock::ConfigError("bench needs --corpus or --scaling");
            const auto corpus = patchblock::load_corpus_file(bench_corpus);
            const patchblock::EvalReport report = patchblock::evaluate(corpus, cfg, bench_seq);
            std::fputs(patchblock::format_report(report).c_str(), stdout);
            if (!bench_report.empty())
                save_text_atomic(patchblock::report_records(report), bench_report);
            return kExitOk;
        }
    } catch (const patchblock::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const patchblock::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const patchblock::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const patchblock::Error& e) {
        // ConfigError, ParameterError, DimensionError, DegenerateGridError
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
    return kExitUsage;
}
