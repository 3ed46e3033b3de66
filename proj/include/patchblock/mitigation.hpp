#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "patchblock/chunking.hpp"

namespace patchblock {

/// Fraction of singular-value mass (first power) to keep when truncating.
struct RetentionPolicy {
    double info = 0.875;
};

/// Full SVD of a square n x n matrix, A = U * diag(sigma) * V^T, singular
/// values sorted descending. U and V are row-major.
struct SvdResult {
    int n = 0;
    std::vector<double> u;
    std::vector<double> sigma;
    std::vector<double> v;
};

/// One-sided Jacobi SVD. Plenty accurate and fast for kernel-sized blocks.
SvdResult svd_decompose(std::span<const double> a, int n);

/// Smallest r with (sigma_1 + ... + sigma_r) / sum(sigma) >= info.
/// Returns 0 when all singular values are zero.
int retained_rank(std::span<const double> sigma_desc, double info);

/// Rank-truncated reconstruction keeping the minimal rank that retains
/// `info` of the singular-value mass. All-zero input reconstructs to zero.
std::vector<double> svd_reduce(std::span<const double> block, int n, const RetentionPolicy& policy);

/// Applies svd_reduce per channel to a chunk's pixel block, then clamps to
/// [0,255] and rounds half-up back to 8-bit.
std::vector<std::uint8_t> mitigate_chunk(const Chunk& chunk, int kernel, int channels,
                                         const RetentionPolicy& policy);

}  // namespace patchblock
