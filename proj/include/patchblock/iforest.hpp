#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patchblock/rng.hpp"

namespace patchblock {

using Matrix = std::vector<std::vector<double>>;  // one feature vector per row

/// Tree node in arena form. Internal nodes route value < split_value to the
/// left child and value >= split_value to the right.
struct TreeNode {
    int attribute = -1;  // -1 marks an external (leaf) node
    double split_value = 0.0;
    double separability = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;  // external nodes: training points reaching the leaf

    bool external() const { return attribute < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct FastIsolationForest {
    std::vector<Tree> trees;
    int sample_size = 0;
    double normalizer = 0.0;  // c(sample_size)
    int dimensions = 0;
    std::uint64_t seed = 0;
    bool targeted = true;  // false for the random-cut baseline
};

/// Result of one split-point search over a single attribute.
struct SeparabilityScan {
    double best_split = 0.0;
    double highest_separation = 0.0;
    int evaluations = 0;  // distinct candidate partitions scored
};

/// Separability index of splitting sorted values at v (left: x < v,
/// right: x >= v): |E_left - E_right| * Var(all) / (Var_left + Var_right + 1e-12)
/// with population variances. Throws UndefinedSplitError if a side is empty.
double separation(std::span<const double> sorted_values, double v);

/// Separability gradient between adjacent values x_i and x_{i+1} (0-based).
/// Requires x_{i+1} != x_i.
double gradient(std::span<const double> sorted_values, std::size_t i);

/// Adaptive scan step from the separability gradient; always >= 1.
int update_step(double g, std::size_t n_values);

/// Gradient-guided search for the split with the highest separability index.
/// Steps through the sorted values adaptively, skipping runs of duplicates,
/// so it usually scores far fewer candidates than an exhaustive scan.
SeparabilityScan gradient_split(std::vector<double> values);

/// Average unsuccessful-search path length c(n) = 2 H(n-1) - 2(n-1)/n with
/// H(i) = ln(i) + 0.5772156649; zero for n <= 1.
double average_path_length(std::size_t n);

/// 2^(-mean_path / c_s); 0.5 exactly when mean_path == c_s.
double score_from_mean_path(double mean_path, double c_s);

/// Single tree over all rows of `points`, split by the targeted cut.
Tree build_tree(const Matrix& points, int height, int height_max, int k_attrs, Rng& rng);

/// Path length of x through one tree: edges traversed plus c(leaf size).
double path_length(const Tree& tree, std::span<const double> x);

/// Ensemble of targeted-cut trees, each grown on an independent subsample of
/// size `sample_size` drawn without replacement. Per-tree RNG streams derive
/// from (seed, tree index), so any worker count yields the same forest.
FastIsolationForest build_forest(const Matrix& points, int trees, int sample_size, int k_attrs,
                                 std::uint64_t seed, int workers = 1);

/// Classic isolation forest (random attribute, uniform split); kept as an
/// independent reference for ranking comparisons.
FastIsolationForest build_random_forest(const Matrix& points, int trees, int sample_size,
                                        std::uint64_t seed, int workers = 1);

double anomaly_score(const FastIsolationForest& forest, std::span<const double> x);

std::vector<double> anomaly_scores(const FastIsolationForest& forest, const Matrix& points,
                                   int workers = 1);

/// Versioned text serialization; hex floats make the round trip bit-exact.
std::string dump_forest(const FastIsolationForest& forest);
FastIsolationForest parse_forest(const std::string& text);

}  // namespace patchblock
