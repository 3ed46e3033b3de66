#include "patchblock/mi.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "patchblock/errors.hpp"
#include "patchblock/parallel.hpp"

namespace patchblock {
namespace {

void validate(const HistogramConfig& cfg) {
    if (cfg.bins < 2 || cfg.bins > 256) throw ParameterError("bins must be in [2, 256]");
}

inline int bin_of(std::uint8_t v, int bins) { return (static_cast<int>(v) * bins) >> 8; }

// Core estimate over the joint histogram. With integer counts the sum is
// exactly zero when every cell satisfies c*N == row*col, so the result is
// never negative.
double mi_from_pair(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int bins) {
    const std::size_t n = a.size();
    std::vector<std::uint32_t> joint(static_cast<std::size_t>(bins) * bins, 0);
    for (std::size_t p = 0; p < n; ++p) ++joint[bin_of(a[p], bins) * bins + bin_of(b[p], bins)];

    std::vector<std::uint32_t> row(bins, 0), col(bins, 0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            row[i] += joint[i * bins + j];
            col[j] += joint[i * bins + j];
        }

    const double total = static_cast<double>(n);
    double mi = 0.0;
    for (int i = 0; i < bins; ++i) {
        if (row[i] == 0) continue;
        for (int j = 0; j < bins; ++j) {
            const std::uint32_t c = joint[i * bins + j];
            if (c == 0) continue;  // 0*log(0) := 0
            mi += (c / total) * std::log2(c * total / (static_cast<double>(row[i]) * col[j]));
        }
    }
    return mi;
}

}  // namespace

double mutual_information(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                          const HistogramConfig& cfg) {
    validate(cfg);
    if (a.size() != b.size() || a.empty()) throw DimensionError("MI blocks must match in size");
    // Canonical argument order makes mutual_information(a,b) and
    // mutual_information(b,a) run the identical float sequence.
    if (std::memcmp(a.data(), b.data(), a.size()) > 0) std::swap(a, b);
    return mi_from_pair(a, b, cfg.bins);
}

double binned_entropy(std::span<const std::uint8_t> a, const HistogramConfig& cfg) {
    validate(cfg);
    if (a.empty()) throw DimensionError("empty block");
    std::vector<std::uint32_t> hist(cfg.bins, 0);
    for (const std::uint8_t v : a) ++hist[bin_of(v, cfg.bins)];
    const double total = static_cast<double>(a.size());
    double h = 0.0;
    for (int i = 0; i < cfg.bins; ++i) {
        if (hist[i] == 0) continue;
        const double p = hist[i] / total;
        h -= p * std::log2(p);
    }
    return h;
}

std::vector<std::vector<double>> localized_mi(const ChunkGrid& grid, int index,
                                              const HistogramConfig& cfg) {
    validate(cfg);
    if (grid.count() < 2)
        throw DegenerateGridError("localized MI needs a grid with at least 2 chunks");
    const std::vector<int> nbrs = neighbors_of(grid, index);
    const std::size_t block_plane = static_cast<std::size_t>(grid.kernel) * grid.kernel;
    std::vector<std::vector<double>> out(grid.channels);
    for (int ch = 0; ch < grid.channels; ++ch) {
        out[ch].reserve(nbrs.size());
        std::span<const std::uint8_t> self(grid.chunks[index].pixels.data() + ch * block_plane,
                                           block_plane);
        for (const int nb : nbrs) {
            std::span<const std::uint8_t> other(grid.chunks[nb].pixels.data() + ch * block_plane,
                                                block_plane);
            out[ch].push_back(mutual_information(self, other, cfg));
        }
    }
    return out;
}

std::vector<ChunkFeatures> extract_features(const ChunkGrid& grid, const HistogramConfig& cfg,
                                            int workers, MiStats* stats) {
    validate(cfg);
    if (grid.count() < 2)
        throw DegenerateGridError("feature extraction needs a grid with at least 2 chunks");

    std::vector<ChunkFeatures> out(grid.count());
    std::atomic<std::uint64_t> evals{0};
    parallel_for(grid.chunks.size(), workers, [&](std::size_t i) {
        const auto per_channel = localized_mi(grid, static_cast<int>(i), cfg);
        ChunkFeatures cf;
        cf.chunk_index = static_cast<int>(i);
        cf.features.reserve(3 * per_channel.size());
        std::uint64_t local = 0;
        for (const auto& mis : per_channel) {
            double sum = 0.0, lo = mis[0], hi = mis[0];
            for (const double v : mis) {
                sum += v;
                if (v < lo) lo = v;
                if (v > hi) hi = v;
            }
            cf.features.push_back(sum / static_cast<double>(mis.size()));
            cf.features.push_back(lo);
            cf.features.push_back(hi);
            local += mis.size();
        }
        evals.fetch_add(local, std::memory_order_relaxed);
        out[i] = std::move(cf);
    });
    if (stats) stats->evaluations = evals.load();
    return out;
}

}  // namespace patchblock
