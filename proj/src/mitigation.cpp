#include "patchblock/mitigation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "patchblock/errors.hpp"

namespace patchblock {
namespace {

void validate_policy(const RetentionPolicy& policy) {
    if (!(policy.info > 0.0) || policy.info > 1.0)
        throw ParameterError("info must lie in (0, 1]");
}

}  // namespace

SvdResult svd_decompose(std::span<const double> a, int n) {
    if (n < 1 || a.size() != static_cast<std::size_t>(n) * n)
        throw DimensionError("svd_decompose expects a square n x n block");
    for (const double x : a)
        if (!std::isfinite(x)) throw NumericError("non-finite matrix entry");

    // Hestenes one-sided Jacobi: orthogonalize the columns of W = A by plane
    // rotations, accumulating them into V; then A = W V^T with W = U * Sigma.
    const std::size_t nn = static_cast<std::size_t>(n);
    std::vector<double> w(nn * nn), v(nn * nn, 0.0);
    for (std::size_t r = 0; r < nn; ++r)
        for (std::size_t c = 0; c < nn; ++c) w[c * nn + r] = a[r * nn + c];  // column-major
    for (std::size_t c = 0; c < nn; ++c) v[c * nn + c] = 1.0;

    const double eps = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < nn; ++p) {
            for (std::size_t q = p + 1; q < nn; ++q) {
                double* wp = w.data() + p * nn;
                double* wq = w.data() + q * nn;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t r = 0; r < nn; ++r) {
                    alpha += wp[r] * wp[r];
                    beta += wq[r] * wq[r];
                    gamma += wp[r] * wq[r];
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::fabs(gamma) <= eps * std::sqrt(alpha * beta)) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* vp = v.data() + p * nn;
                double* vq = v.data() + q * nn;
                for (std::size_t r = 0; r < nn; ++r) {
                    const double xp = wp[r], xq = wq[r];
                    wp[r] = c * xp - s * xq;
                    wq[r] = s * xp + c * xq;
                    const double yp = vp[r], yq = vq[r];
                    vp[r] = c * yp - s * yq;
                    vq[r] = s * yp + c * yq;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    // Column norms are the singular values; sort descending.
    std::vector<double> sigma(nn);
    for (std::size_t c = 0; c < nn; ++c) {
        double norm2 = 0.0;
        for (std::size_t r = 0; r < nn; ++r) norm2 += w[c * nn + r] * w[c * nn + r];
        sigma[c] = std::sqrt(norm2);
    }
    std::vector<std::size_t> order(nn);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

    SvdResult out;
    out.n = n;
    out.sigma.resize(nn);
    out.u.assign(nn * nn, 0.0);
    out.v.assign(nn * nn, 0.0);
    for (std::size_t k = 0; k < nn; ++k) {
        const std::size_t src = order[k];
        out.sigma[k] = sigma[src];
        const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (std::size_t r = 0; r < nn; ++r) {
            out.u[r * nn + k] = w[src * nn + r] * inv;
            out.v[r * nn + k] = v[src * nn + r];
        }
    }
    return out;
}

int retained_rank(std::span<const double> sigma_desc, double info) {
    double total = 0.0;
    for (const double s : sigma_desc) total += s;
    if (total <= 0.0) return 0;
    double prefix = 0.0;
    for (std::size_t i = 0; i < sigma_desc.size(); ++i) {
        prefix += sigma_desc[i];
        if (prefix / total >= info) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(sigma_desc.size());
}

std::vector<double> svd_reduce(std::span<const double> block, int n,
                               const RetentionPolicy& policy) {
    validate_policy(policy);
    const SvdResult svd = svd_decompose(block, n);
    const int r = retained_rank(svd.sigma, policy.info);
    const std::size_t nn = static_cast<std::size_t>(n);
    std::vector<double> out(nn * nn, 0.0);
    for (int k = 0; k < r; ++k) {
        const double s = svd.sigma[k];
        for (std::size_t i = 0; i < nn; ++i) {
            const double us = svd.u[i * nn + k] * s;
            if (us == 0.0) continue;
            for (std::size_t j = 0; j < nn; ++j) out[i * nn + j] += us * svd.v[j * nn + k];
        }
    }
    return out;
}

std::vector<std::uint8_t> mitigate_chunk(const Chunk& chunk, int kernel, int channels,
                                         const RetentionPolicy& policy) {
    validate_policy(policy);
    const std::size_t plane = static_cast<std::size_t>(kernel) * kernel;
    if (chunk.pixels.size() != plane * channels)
        throw DimensionError("chunk pixel block does not match kernel/channels");

    std::vector<std::uint8_t> out(plane * channels);
    std::vector<double> block(plane);
    for (int ch = 0; ch < channels; ++ch) {
        const std::uint8_t* src = chunk.pixels.data() + ch * plane;
        for (std::size_t p = 0; p < plane; ++p) block[p] = static_cast<double>(src[p]);
        const std::vector<double> reduced = svd_reduce(block, kernel, policy);
        std::uint8_t* dst = out.data() + ch * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            const double clamped = std::clamp(reduced[p], 0.0, 255.0);
            dst[p] = static_cast<std::uint8_t>(std::llround(clamped));
        }
    }
    return out;
}

}  // namespace patchblock
