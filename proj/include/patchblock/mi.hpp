#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchblock/chunking.hpp"

namespace patchblock {

/// Uniform binning of [0,255] into `bins` cells for the joint histograms
/// behind the MI estimate.
struct HistogramConfig {
    int bins = 32;
};

/// Per-chunk feature vector: for each channel, (mean, min, max) of the MI
/// values between the chunk and its grid neighbors. Length 3*channels.
struct ChunkFeatures {
    int chunk_index = 0;
    std::vector<double> features;
};

struct MiStats {
    std::uint64_t evaluations = 0;  // number of pairwise MI computations
};

/// Mutual information in bits between two equal-sized single-channel blocks,
/// estimated from the joint histogram of co-located pixel pairs. Symmetric
/// bit-for-bit in its arguments; ranges over [0, log2 bins].
double mutual_information(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b,
                          const HistogramConfig& cfg);

/// Binned Shannon entropy of one block in bits; equals MI of the block with
/// itself.
double binned_entropy(std::span<const std::uint8_t> a, const HistogramConfig& cfg);

/// MI between chunk `index` and each of its neighbors, per channel:
/// result[channel][j] pairs with neighbors_of(grid, index)[j].
std::vector<std::vector<double>> localized_mi(const ChunkGrid& grid, int index,
                                              const HistogramConfig& cfg);

/// Feature vectors for every chunk. Work is independent per chunk, so any
/// worker count produces bit-identical output.
std::vector<ChunkFeatures> extract_features(const ChunkGrid& grid, const HistogramConfig& cfg,
                                            int workers = 1, MiStats* stats = nullptr);

}  // namespace patchblock
