#include "patchblock/iforest.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "patchblock/errors.hpp"
#include "patchblock/parallel.hpp"

namespace patchblock {
namespace {

constexpr double kVarEpsilon = 1e-12;
constexpr double kEulerMascheroni = 0.5772156649;

void check_sorted(std::span<const double> values) {
    if (values.size() < 2) throw ParameterError("need at least 2 values");
    if (!std::is_sorted(values.begin(), values.end()))
        throw ParameterError("values must be sorted ascending");
}

// Prefix-sum view over one sorted attribute; scores any left/right boundary
// in O(1). gradient_split uses this, while the public separation() recomputes
// the formula directly, so the two act as cross-checks of each other.
class BoundaryScorer {
public:
    explicit BoundaryScorer(std::span<const double> sorted) : x_(sorted) {
        const std::size_t n = x_.size();
        sum1_.resize(n + 1, 0.0);
        sum2_.resize(n + 1, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            sum1_[i + 1] = sum1_[i] + x_[i];
            sum2_[i + 1] = sum2_[i] + x_[i] * x_[i];
        }
        var_total_ = variance(0, n);
        seps_.assign(n, -1.0);  // -1 marks "not scored yet"
    }

    // Boundary b: left = x[0..b-1], right = x[b..n-1]; b in [1, n-1].
    double score(std::size_t b) {
        if (seps_[b] >= 0.0) return seps_[b];
        const std::size_t n = x_.size();
        const double e_left = sum1_[b] / static_cast<double>(b);
        const double e_right = (sum1_[n] - sum1_[b]) / static_cast<double>(n - b);
        const double var_left = variance(0, b);
        const double var_right = variance(b, n);
        const double sep =
            std::fabs(e_left - e_right) * var_total_ / (var_left + var_right + kVarEpsilon);
        seps_[b] = sep;
        ++evaluations_;
        return sep;
    }

    int evaluations() const { return evaluations_; }

private:
    double variance(std::size_t begin, std::size_t end) const {
        const double m = static_cast<double>(end - begin);
        const double mean = (sum1_[end] - sum1_[begin]) / m;
        const double v = (sum2_[end] - sum2_[begin]) / m - mean * mean;
        return v > 0.0 ? v : 0.0;
    }

    std::span<const double> x_;
    std::vector<double> sum1_, sum2_;
    std::vector<double> seps_;
    double var_total_ = 0.0;
    int evaluations_ = 0;
};

}  // namespace

double separation(std::span<const double> sorted_values, double v) {
    check_sorted(sorted_values);
    double sum_l = 0.0, sum_r = 0.0;
    std::size_t n_l = 0, n_r = 0;
    for (const double x : sorted_values) {
        if (x < v) {
            sum_l += x;
            ++n_l;
        } else {
            sum_r += x;
            ++n_r;
        }
    }
    if (n_l == 0 || n_r == 0)
        throw UndefinedSplitError("split value leaves one side of the partition empty");

    const double e_l = sum_l / static_cast<double>(n_l);
    const double e_r = sum_r / static_cast<double>(n_r);
    const double e_all = (sum_l + sum_r) / static_cast<double>(n_l + n_r);
    double var_l = 0.0, var_r = 0.0, var_all = 0.0;
    for (const double x : sorted_values) {
        var_all += (x - e_all) * (x - e_all);
        if (x < v)
            var_l += (x - e_l) * (x - e_l);
        else
            var_r += (x - e_r) * (x - e_r);
    }
    var_l /= static_cast<double>(n_l);
    var_r /= static_cast<double>(n_r);
    var_all /= static_cast<double>(n_l + n_r);
    return std::sqrt((e_l - e_r) * (e_l - e_r)) * var_all / (var_l + var_r + kVarEpsilon);
}

double gradient(std::span<const double> sorted_values, std::size_t i) {
    check_sorted(sorted_values);
    if (i + 1 >= sorted_values.size()) throw ParameterError("gradient index out of range");
    const double x0 = sorted_values[i];
    const double x1 = sorted_values[i + 1];
    if (x0 == x1) throw ParameterError("gradient is undefined across duplicate values");
    return (separation(sorted_values, x1) - separation(sorted_values, x0)) / (x1 - x0);
}

int update_step(double g, std::size_t n_values) {
    if (n_values < 2) throw ParameterError("need at least 2 values");
    const double n = static_cast<double>(n_values);
    const double sigmoid = 1.0 / (1.0 + std::exp(g * std::log10(n)));
    const double raw = (g < 0.0 ? 3.0 * sigmoid : 0.7 - 1.3 * sigmoid) * (n / 100.0);
    const long long rounded = std::llround(raw);
    return rounded < 1 ? 1 : static_cast<int>(rounded);
}

SeparabilityScan gradient_split(std::vector<double> values) {
    if (values.size() < 2) throw ParameterError("need at least 2 values");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();

    SeparabilityScan scan;
    if (values.front() == values.back()) {
        scan.best_split = values.front();  // constant attribute: nothing separates
        return scan;
    }

    BoundaryScorer scorer(values);

    // First interior candidate: midpoint of the first distinct adjacent pair.
    // Scoring at x_1 itself would leave the left side empty.
    std::size_t i = 0;
    while (values[i] == values[i + 1]) ++i;
    scan.best_split = (values[i] + values[i + 1]) / 2.0;
    scan.highest_separation = scorer.score(i + 1);

    std::size_t step = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * 0.001));
    for (;;) {
        i += step;
        if (i >= n - 1) break;
        while (i < n - 1 && values[i] == values[i + 1]) ++i;  // skip duplicate runs
        if (i >= n - 1) break;

        const double current = scorer.score(i + 1);
        if (current > scan.highest_separation) {
            scan.highest_separation = current;
            scan.best_split = (values[i] + values[i + 1]) / 2.0;
        }

        // Local gradient across (x_i, x_{i+1}). Separation at the value x_i
        // is the boundary at the start of its duplicate run, which exists
        // because x_i > x_0 here.
        const std::size_t run_start =
            std::lower_bound(values.begin(), values.end(), values[i]) - values.begin();
        const double g = (current - scorer.score(run_start)) / (values[i + 1] - values[i]);
        step = static_cast<std::size_t>(update_step(g, n));
    }
    scan.evaluations = scorer.evaluations();
    return scan;
}

double average_path_length(std::size_t n) {
    if (n <= 1) return 0.0;
    const double m = static_cast<double>(n - 1);
    return 2.0 * (std::log(m) + kEulerMascheroni) -
           2.0 * m / static_cast<double>(n);
}

double score_from_mean_path(double mean_path, double c_s) {
    return std::exp2(-mean_path / c_s);
}

namespace {

struct TreeBuilder {
    const Matrix& points;
    int height_max;
    int k_attrs;
    Rng& rng;
    Tree tree;
    bool targeted;

    int build(std::vector<int>& subset, int height) {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (height >= height_max || subset.size() <= 1) {
            tree.nodes[id].size = static_cast<int>(subset.size());
            return id;
        }
        const int q = static_cast<int>(points[0].size());

        int best_attr = -1;
        double best_split = 0.0;
        double best_sep = -1.0;
        if (targeted) {
            // Sample k distinct attributes, keep the one whose gradient_split
            // reports the highest separability (ties: lowest ordinal).
            std::vector<int> attrs(q);
            std::iota(attrs.begin(), attrs.end(), 0);
            for (int j = 0; j < k_attrs; ++j) {
                const std::size_t pick = j + rng.below(static_cast<std::uint64_t>(q - j));
                std::swap(attrs[j], attrs[pick]);
                const int attr = attrs[j];
                std::vector<double> vals(subset.size());
                for (std::size_t r = 0; r < subset.size(); ++r) vals[r] = points[subset[r]][attr];
                const SeparabilityScan scan = gradient_split(std::move(vals));
                if (scan.highest_separation > best_sep ||
                    (scan.highest_separation == best_sep && attr < best_attr)) {
                    best_sep = scan.highest_separation;
                    best_attr = attr;
                    best_split = scan.best_split;
                }
            }
        } else {
            best_attr = static_cast<int>(rng.below(static_cast<std::uint64_t>(q)));
            double lo = points[subset[0]][best_attr];
            double hi = lo;
            for (const int r : subset) {
                lo = std::min(lo, points[r][best_attr]);
                hi = std::max(hi, points[r][best_attr]);
            }
            if (lo == hi) {
                tree.nodes[id].size = static_cast<int>(subset.size());
                return id;
            }
            best_split = lo + rng.next_double() * (hi - lo);
            best_sep = 0.0;
        }

        std::vector<int> left_set, right_set;
        left_set.reserve(subset.size());
        right_set.reserve(subset.size());
        for (const int r : subset) {
            if (points[r][best_attr] < best_split)
                left_set.push_back(r);
            else
                right_set.push_back(r);
        }
        subset.clear();
        subset.shrink_to_fit();

        const int left_id = build(left_set, height + 1);
        const int right_id = build(right_set, height + 1);
        tree.nodes[id].attribute = best_attr;
        tree.nodes[id].split_value = best_split;
        tree.nodes[id].separability = best_sep;
        tree.nodes[id].left = left_id;
        tree.nodes[id].right = right_id;
        return id;
    }
};

void validate_points(const Matrix& points) {
    if (points.empty()) throw ParameterError("empty training data");
    const std::size_t q = points[0].size();
    if (q == 0) throw ParameterError("zero-dimensional training data");
    for (const auto& row : points)
        if (row.size() != q) throw DimensionError("ragged feature matrix");
}

FastIsolationForest build_impl(const Matrix& points, int trees, int sample_size, int k_attrs,
                               std::uint64_t seed, int workers, bool targeted) {
    validate_points(points);
    const int n = static_cast<int>(points.size());
    const int q = static_cast<int>(points[0].size());
    if (trees < 1) throw ParameterError("need at least 1 tree");
    if (sample_size < 2) throw ParameterError("sample size must be >= 2");
    if (sample_size > n) throw ParameterError("sample size exceeds data size");
    if (k_attrs == 0) k_attrs = q;
    if (k_attrs < 1 || k_attrs > q) throw ParameterError("k_attrs must be in [1, dimensions]");

    FastIsolationForest forest;
    forest.sample_size = sample_size;
    forest.normalizer = average_path_length(static_cast<std::size_t>(sample_size));
    forest.dimensions = q;
    forest.seed = seed;
    forest.targeted = targeted;
    forest.trees.resize(trees);

    const int height_max = std::bit_width(static_cast<unsigned>(sample_size - 1));

    std::vector<std::uint64_t> tree_seeds(trees);
    for (int t = 0; t < trees; ++t) tree_seeds[t] = derive_seed(seed, static_cast<std::uint64_t>(t));

    parallel_for(static_cast<std::size_t>(trees), workers, [&](std::size_t t) {
        Rng rng(tree_seeds[t]);
        std::vector<int> indices(n);
        std::iota(indices.begin(), indices.end(), 0);
        for (int j = 0; j < sample_size; ++j) {
            const std::size_t pick = j + rng.below(static_cast<std::uint64_t>(n - j));
            std::swap(indices[j], indices[pick]);
        }
        std::vector<int> subset(indices.begin(), indices.begin() + sample_size);
        TreeBuilder builder{points, height_max, k_attrs, rng, {}, targeted};
        builder.build(subset, 0);
        forest.trees[t] = std::move(builder.tree);
    });
    return forest;
}

}  // namespace

Tree build_tree(const Matrix& points, int height, int height_max, int k_attrs, Rng& rng) {
    validate_points(points);
    const int q = static_cast<int>(points[0].size());
    if (k_attrs == 0) k_attrs = q;
    if (k_attrs < 1 || k_attrs > q) throw ParameterError("k_attrs must be in [1, dimensions]");
    std::vector<int> subset(points.size());
    std::iota(subset.begin(), subset.end(), 0);
    TreeBuilder builder{points, height_max, k_attrs, rng, {}, true};
    builder.build(subset, height);
    return std::move(builder.tree);
}

double path_length(const Tree& tree, std::span<const double> x) {
    int node = 0;
    double edges = 0.0;
    while (!tree.nodes[node].external()) {
        const TreeNode& nd = tree.nodes[node];
        node = x[nd.attribute] < nd.split_value ? nd.left : nd.right;
        edges += 1.0;
    }
    return edges + average_path_length(static_cast<std::size_t>(tree.nodes[node].size));
}

FastIsolationForest build_forest(const Matrix& points, int trees, int sample_size, int k_attrs,
                                 std::uint64_t seed, int workers) {
    return build_impl(points, trees, sample_size, k_attrs, seed, workers, true);
}

FastIsolationForest build_random_forest(const Matrix& points, int trees, int sample_size,
                                        std::uint64_t seed, int workers) {
    return build_impl(points, trees, sample_size, 0, seed, workers, false);
}

double anomaly_score(const FastIsolationForest& forest, std::span<const double> x) {
    if (static_cast<int>(x.size()) != forest.dimensions)
        throw DimensionError("query dimensionality does not match the forest");
    double total = 0.0;
    for (const Tree& tree : forest.trees) total += path_length(tree, x);
    return score_from_mean_path(total / static_cast<double>(forest.trees.size()),
                                forest.normalizer);
}

std::vector<double> anomaly_scores(const FastIsolationForest& forest, const Matrix& points,
                                   int workers) {
    std::vector<double> out(points.size());
    parallel_for(points.size(), workers, [&](std::size_t i) {
        out[i] = anomaly_score(forest, points[i]);
    });
    return out;
}

std::string dump_forest(const FastIsolationForest& forest) {
    std::ostringstream os;
    char buf[64];
    os << "PBFOREST 1 " << (forest.targeted ? "fast" : "random") << ' ' << forest.trees.size()
       << ' ' << forest.sample_size << ' ' << forest.dimensions << ' ' << forest.seed;
    std::snprintf(buf, sizeof buf, " %a\n", forest.normalizer);
    os << buf;
    for (const Tree& tree : forest.trees) {
        os << "T " << tree.nodes.size() << '\n';
        for (const TreeNode& nd : tree.nodes) {
            if (nd.external()) {
                os << "E " << nd.size << '\n';
            } else {
                std::snprintf(buf, sizeof buf, "I %d %a %a %d %d\n", nd.attribute, nd.split_value,
                              nd.separability, nd.left, nd.right);
                os << buf;
            }
        }
    }
    os << "END\n";
    return os.str();
}

FastIsolationForest parse_forest(const std::string& text) {
    std::istringstream is(text);
    std::string magic, kind;
    int version = 0;
    std::size_t n_trees = 0;
    FastIsolationForest forest;
    is >> magic >> version >> kind >> n_trees >> forest.sample_size >> forest.dimensions >>
        forest.seed;
    std::string norm_hex;
    is >> norm_hex;
    if (!is || magic != "PBFOREST" || version != 1 || (kind != "fast" && kind != "random"))
        throw FormatError("not a PBFOREST v1 dump");
    forest.targeted = kind == "fast";
    forest.normalizer = std::strtod(norm_hex.c_str(), nullptr);

    forest.trees.resize(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) {
        std::string tag;
        std::size_t n_nodes = 0;
        is >> tag >> n_nodes;
        if (!is || tag != "T") throw FormatError("malformed forest dump (tree header)");
        forest.trees[t].nodes.resize(n_nodes);
        for (std::size_t k = 0; k < n_nodes; ++k) {
            is >> tag;
            TreeNode& nd = forest.trees[t].nodes[k];
            if (tag == "E") {
                is >> nd.size;
            } else if (tag == "I") {
                std::string split_hex, sep_hex;
                is >> nd.attribute >> split_hex >> sep_hex >> nd.left >> nd.right;
                nd.split_value = std::strtod(split_hex.c_str(), nullptr);
                nd.separability = std::strtod(sep_hex.c_str(), nullptr);
                if (nd.attribute < 0 || nd.attribute >= forest.dimensions ||
                    nd.left < 0 || nd.right < 0 || static_cast<std::size_t>(nd.left) >= n_nodes ||
                    static_cast<std::size_t>(nd.right) >= n_nodes)
                    throw FormatError("malformed forest dump (node indices)");
            } else {
                throw FormatError("malformed forest dump (node tag)");
            }
            if (!is) throw FormatError("truncated forest dump");
        }
    }
    std::string tail;
    is >> tail;
    if (tail != "END") throw FormatError("missing END marker in forest dump");
    return forest;
}

}  // namespace patchblock
