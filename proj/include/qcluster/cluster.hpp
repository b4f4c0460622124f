#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcluster/matrix.hpp"
#include "qcluster/parallel.hpp"
#include "qcluster/quantum.hpp"
#include "qcluster/rng.hpp"

namespace qcluster::cluster {

struct ClusterAssignment {
    std::vector<int> labels;  // per-row cluster index in [0, k)
    Matrix centroids;         // k x dim
    double inertia = 0.0;     // within-cluster sum of squared distances
    int k = 0;
};

namespace detail {

inline double point_inertia(const Matrix& x, const Matrix& centroids, const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i)
        total += squared_distance(x.row(i), centroids.row(static_cast<std::size_t>(labels[i])));
    return total;
}

// k-means++ seeding: squared-distance-weighted draws off the given stream.
inline Matrix kmeanspp_seed(const Matrix& x, int k, Rng& rng) {
    Matrix centroids(static_cast<std::size_t>(k), x.cols);
    const std::size_t first = rng.uniform_index(x.rows);
    std::copy_n(x.row(first).begin(), x.cols, centroids.row(0).begin());

    std::vector<double> dist_sq(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) dist_sq[i] = squared_distance(x.row(i), centroids.row(0));

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (const double d : dist_sq) total += d;
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                cum += dist_sq[i];
                if (cum >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = rng.uniform_index(x.rows);  // all points coincide with chosen centroids
        }
        std::copy_n(x.row(chosen).begin(), x.cols, centroids.row(static_cast<std::size_t>(c)).begin());
        for (std::size_t i = 0; i < x.rows; ++i)
            dist_sq[i] = std::min(dist_sq[i],
                                  squared_distance(x.row(i), centroids.row(static_cast<std::size_t>(c))));
    }
    return centroids;
}

inline ClusterAssignment lloyd(const Matrix& x, int k, int max_iter, Rng& rng) {
    ClusterAssignment result;
    result.k = k;
    result.centroids = kmeanspp_seed(x, k, rng);
    result.labels.assign(x.rows, -1);

    double prev_inertia = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        // Assignment step; ties go to the lowest cluster index.
        bool changed = false;
        for (std::size_t i = 0; i < x.rows; ++i) {
            int best = 0;
            double best_d = squared_distance(x.row(i), result.centroids.row(0));
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(x.row(i), result.centroids.row(static_cast<std::size_t>(c)));
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (result.labels[i] != best) {
                result.labels[i] = best;
                changed = true;
            }
        }

        // Empty-cluster repair: move the point farthest from its assigned
        // centroid into the empty cluster.
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (const int l : result.labels) ++counts[static_cast<std::size_t>(l)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < x.rows; ++i) {
                if (counts[static_cast<std::size_t>(result.labels[i])] <= 1) continue;
                const double d = squared_distance(
                    x.row(i), result.centroids.row(static_cast<std::size_t>(result.labels[i])));
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            --counts[static_cast<std::size_t>(result.labels[worst])];
            result.labels[worst] = c;
            ++counts[static_cast<std::size_t>(c)];
            changed = true;
        }

        // Update step.
        Matrix sums(static_cast<std::size_t>(k), x.cols);
        for (std::size_t i = 0; i < x.rows; ++i) {
            const auto row = x.row(i);
            auto acc = sums.row(static_cast<std::size_t>(result.labels[i]));
            for (std::size_t d = 0; d < x.cols; ++d) acc[d] += row[d];
        }
        for (int c = 0; c < k; ++c)
            for (std::size_t d = 0; d < x.cols; ++d)
                result.centroids.at(static_cast<std::size_t>(c), d) =
                    sums.at(static_cast<std::size_t>(c), d) /
                    static_cast<double>(counts[static_cast<std::size_t>(c)]);

        const double inertia = point_inertia(x, result.centroids, result.labels);
        assert(inertia <= prev_inertia * (1.0 + 1e-12) + 1e-9);
        const bool converged = !changed || inertia == prev_inertia;
        prev_inertia = inertia;
        if (converged) break;
    }
    result.inertia = prev_inertia;
    return result;
}

}  // namespace detail

// Lloyd iterations from k-means++ seeds; best inertia over `restarts`
// independent attempts. Deterministic given the seed.
inline ClusterAssignment kmeans(const Matrix& features, int k, int restarts = 10, int max_iter = 100,
                                std::uint64_t seed = 0) {
    if (k <= 0) throw std::invalid_argument("kmeans: k must be >= 1");
    if (static_cast<std::size_t>(k) > features.rows)
        throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds row count " +
                                    std::to_string(features.rows));
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");
    if (max_iter < 1) throw std::invalid_argument("kmeans: max_iter must be >= 1");

    ClusterAssignment best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, "kmeans-restart", static_cast<std::uint64_t>(r)));
        auto attempt = detail::lloyd(features, k, max_iter, rng);
        if (attempt.inertia < best.inertia) best = std::move(attempt);
    }
    return best;
}

namespace detail {

inline int cluster_count(const std::vector<int>& labels) {
    int mx = -1;
    for (const int l : labels) {
        if (l < 0) throw std::invalid_argument("labels must be non-negative");
        mx = std::max(mx, l);
    }
    return mx + 1;
}

inline std::vector<std::vector<std::size_t>> members_by_cluster(const std::vector<int>& labels, int k) {
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
        members[static_cast<std::size_t>(labels[i])].push_back(i);
    return members;
}

inline Matrix centroids_of(const Matrix& x, const std::vector<std::vector<std::size_t>>& members) {
    Matrix centroids(members.size(), x.cols);
    for (std::size_t c = 0; c < members.size(); ++c) {
        for (const std::size_t i : members[c]) {
            const auto row = x.row(i);
            for (std::size_t d = 0; d < x.cols; ++d) centroids.at(c, d) += row[d];
        }
        for (std::size_t d = 0; d < x.cols; ++d)
            centroids.at(c, d) /= static_cast<double>(members[c].size());
    }
    return centroids;
}

}  // namespace detail

// Mean over points of (b - a) / max(a, b); a = mean intra-cluster distance
// excluding self, b = smallest mean distance to another cluster. Points in
// singleton clusters score 0.
inline double silhouette(const Matrix& features, const std::vector<int>& labels) {
    const std::size_t n = features.rows;
    if (labels.size() != n) throw std::invalid_argument("silhouette: label count mismatch");
    if (n < 2) throw std::invalid_argument("silhouette: need at least 2 points");
    const int k = detail::cluster_count(labels);
    if (k < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");
    const auto members = detail::members_by_cluster(labels, k);
    for (const auto& m : members)
        if (m.empty()) throw std::invalid_argument("silhouette: empty cluster index");

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(labels[i]);
        if (members[own].size() == 1) continue;  // singleton convention: s = 0

        double a = 0.0;
        for (const std::size_t j : members[own])
            if (j != i) a += euclidean_distance(features.row(i), features.row(j));
        a /= static_cast<double>(members[own].size() - 1);

        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < members.size(); ++c) {
            if (c == own) continue;
            double mean = 0.0;
            for (const std::size_t j : members[c])
                mean += euclidean_distance(features.row(i), features.row(j));
            mean /= static_cast<double>(members[c].size());
            b = std::min(b, mean);
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

// DB = (1/K) sum_i max_{j != i} (S_i + S_j) / M_ij with S the mean member
// distance to the centroid and M the centroid separation. Coincident
// centroids with zero scatter contribute ratio 0; with nonzero scatter the
// index is undefined and an error is raised.
inline double davies_bouldin(const Matrix& features, const std::vector<int>& labels) {
    if (labels.size() != features.rows) throw std::invalid_argument("davies_bouldin: label count mismatch");
    const int k = detail::cluster_count(labels);
    if (k < 2) throw std::invalid_argument("davies_bouldin: need at least 2 clusters");
    const auto members = detail::members_by_cluster(labels, k);
    for (const auto& m : members)
        if (m.empty()) throw std::invalid_argument("davies_bouldin: empty cluster index");
    const auto centroids = detail::centroids_of(features, members);

    std::vector<double> scatter(static_cast<std::size_t>(k), 0.0);
    for (std::size_t c = 0; c < members.size(); ++c) {
        for (const std::size_t i : members[c])
            scatter[c] += euclidean_distance(features.row(i), centroids.row(c));
        scatter[c] /= static_cast<double>(members[c].size());
    }

    double total = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (j == i) continue;
            const double m_ij = euclidean_distance(centroids.row(i), centroids.row(j));
            const double s_sum = scatter[i] + scatter[j];
            if (m_ij == 0.0) {
                if (s_sum == 0.0) continue;  // ratio defined as 0
                throw std::runtime_error("davies_bouldin: coincident centroids with nonzero scatter");
            }
            worst = std::max(worst, s_sum / m_ij);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

// CH = [B / (k-1)] / [W / (n-k)]; W = 0 reports the +inf sentinel.
inline double calinski_harabasz(const Matrix& features, const std::vector<int>& labels) {
    const std::size_t n = features.rows;
    if (labels.size() != n) throw std::invalid_argument("calinski_harabasz: label count mismatch");
    const int k = detail::cluster_count(labels);
    if (k < 2) throw std::invalid_argument("calinski_harabasz: need at least 2 clusters");
    if (n <= static_cast<std::size_t>(k)) throw std::invalid_argument("calinski_harabasz: need n > k");
    const auto members = detail::members_by_cluster(labels, k);
    for (const auto& m : members)
        if (m.empty()) throw std::invalid_argument("calinski_harabasz: empty cluster index");
    const auto centroids = detail::centroids_of(features, members);

    std::vector<double> overall(features.cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = features.row(i);
        for (std::size_t d = 0; d < features.cols; ++d) overall[d] += row[d];
    }
    for (auto& v : overall) v /= static_cast<double>(n);

    double between = 0.0;
    for (std::size_t c = 0; c < members.size(); ++c)
        between += static_cast<double>(members[c].size()) *
                   squared_distance(centroids.row(c), std::span<const double>(overall));
    double within = 0.0;
    for (std::size_t c = 0; c < members.size(); ++c)
        for (const std::size_t i : members[c])
            within += squared_distance(features.row(i), centroids.row(c));

    if (within == 0.0) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

enum class Method { QfWorst, QfAverage, QfBest, Qnn };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::QfWorst: return "Quantum Features (Worst Run)";
        case Method::QfAverage: return "Quantum Features (Average)";
        case Method::QfBest: return "Quantum Features (Best Run)";
        case Method::Qnn: return "QNN";
    }
    return "?";
}

struct MetricsRow {
    int k = 0;
    Method method = Method::Qnn;
    int depth = 0;
    std::optional<int> epoch;  // absent for QF aggregate rows
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    double calinski_harabasz = 0.0;
};

// Every evaluated sweep cell, with the assignment kept for the agent stage.
struct SweepCell {
    int k = 0;
    std::string strategy;  // "QNN" | "QF"
    int depth = 0;
    int epoch = 0;  // trained epoch (1-based) or Monte-Carlo run index (0-based)
    double silhouette = 0.0;
    double davies_bouldin = 0.0;
    double calinski_harabasz = 0.0;
    ClusterAssignment assignment;
};

struct SweepInputs {
    std::vector<quantum::QuantumFeatures> qf_runs;
    std::vector<quantum::QuantumFeatures> qnn_snapshots;
};

struct SweepOptions {
    std::vector<int> k_range = {2, 3, 4, 5, 6};
    int restarts = 10;
    int max_iter = 100;
    std::uint64_t seed = 0;
    unsigned workers = 0;  // 0 = hardware concurrency
};

struct SweepResult {
    std::vector<MetricsRow> rows;
    std::vector<SweepCell> cells;
};

namespace detail {

inline Matrix concat_columns(const Matrix& left, const Matrix& right) {
    if (left.rows != right.rows) throw std::invalid_argument("concat_columns: row count mismatch");
    Matrix out(left.rows, left.cols + right.cols);
    for (std::size_t r = 0; r < left.rows; ++r) {
        std::copy_n(left.row(r).begin(), left.cols, out.row(r).begin());
        std::copy_n(right.row(r).begin(), right.cols, out.row(r).begin() + static_cast<std::ptrdiff_t>(left.cols));
    }
    return out;
}

}  // namespace detail

// Runs K-means and the three metrics for every (k, strategy cell). QF rows
// aggregate worst/average/best by silhouette over the Monte-Carlo runs of the
// depth whose best run scores highest; the QNN row is the (depth, epoch)
// snapshot with the highest silhouette. Hybrid input = classical columns
// concatenated with quantum columns.
inline SweepResult evaluate_sweep(const Matrix& classical, const SweepInputs& inputs,
                                  const SweepOptions& options) {
    if (options.k_range.empty()) throw std::invalid_argument("evaluate_sweep: empty k_range");
    if (inputs.qf_runs.empty() && inputs.qnn_snapshots.empty())
        throw std::invalid_argument("evaluate_sweep: no strategy inputs");

    // Every (k, feature set) cell is independent; evaluate them on a bounded
    // worker pool, each writing its own slot.
    struct Job {
        int k = 0;
        const quantum::QuantumFeatures* source = nullptr;
        bool qnn = false;
    };
    struct KIndices {
        int k = 0;
        std::vector<std::size_t> qf_cells;
        std::vector<std::size_t> qnn_cells;
    };
    std::vector<Job> jobs;
    std::vector<KIndices> per_k;
    for (const int k : options.k_range) {
        KIndices indices;
        indices.k = k;
        for (const auto& run : inputs.qf_runs) {
            indices.qf_cells.push_back(jobs.size());
            jobs.push_back(Job{k, &run, false});
        }
        for (const auto& snap : inputs.qnn_snapshots) {
            indices.qnn_cells.push_back(jobs.size());
            jobs.push_back(Job{k, &snap, true});
        }
        per_k.push_back(std::move(indices));
    }

    SweepResult result;
    result.cells.resize(jobs.size());
    parallel_for(
        jobs.size(),
        [&](std::size_t i) {
            const auto& job = jobs[i];
            const auto& qf = *job.source;
            const Matrix hybrid = detail::concat_columns(classical, qf.matrix);
            const std::uint64_t cell_seed =
                derive_seed(options.seed, "sweep-cell",
                            (static_cast<std::uint64_t>(job.k) << 48) ^
                                (static_cast<std::uint64_t>(qf.provenance.depth) << 32) ^
                                (static_cast<std::uint64_t>(qf.provenance.epoch + 1) << 8) ^
                                (job.qnn ? 1ULL : 0ULL));
            SweepCell cell;
            cell.k = job.k;
            cell.strategy = job.qnn ? "QNN" : "QF";
            cell.depth = qf.provenance.depth;
            cell.epoch = qf.provenance.epoch;
            cell.assignment = kmeans(hybrid, job.k, options.restarts, options.max_iter, cell_seed);
            cell.silhouette = silhouette(hybrid, cell.assignment.labels);
            cell.davies_bouldin = davies_bouldin(hybrid, cell.assignment.labels);
            cell.calinski_harabasz = calinski_harabasz(hybrid, cell.assignment.labels);
            result.cells[i] = std::move(cell);
        },
        options.workers);

    for (const auto& [k, qf_cells, qnn_cells] : per_k) {
        if (!qf_cells.empty()) {
            // Group by depth, aggregate over runs, report the best depth.
            std::map<int, std::vector<std::size_t>> by_depth;
            for (const auto idx : qf_cells) by_depth[result.cells[idx].depth].push_back(idx);

            int best_depth = by_depth.begin()->first;
            double best_depth_sil = -std::numeric_limits<double>::infinity();
            for (const auto& [depth, indices] : by_depth) {
                double depth_best = -std::numeric_limits<double>::infinity();
                for (const auto idx : indices) depth_best = std::max(depth_best, result.cells[idx].silhouette);
                if (depth_best > best_depth_sil) {
                    best_depth_sil = depth_best;
                    best_depth = depth;
                }
            }

            const auto& indices = by_depth.at(best_depth);
            std::size_t worst = indices.front();
            std::size_t best = indices.front();
            double sil_sum = 0.0, db_sum = 0.0, ch_sum = 0.0;
            for (const auto idx : indices) {
                const auto& c = result.cells[idx];
                if (c.silhouette < result.cells[worst].silhouette) worst = idx;
                if (c.silhouette > result.cells[best].silhouette) best = idx;
                sil_sum += c.silhouette;
                db_sum += c.davies_bouldin;
                ch_sum += c.calinski_harabasz;
            }
            const double count = static_cast<double>(indices.size());
            const auto emit = [&](Method method, double sil, double db, double ch) {
                result.rows.push_back(MetricsRow{k, method, best_depth, std::nullopt, sil, db, ch});
            };
            emit(Method::QfWorst, result.cells[worst].silhouette, result.cells[worst].davies_bouldin,
                 result.cells[worst].calinski_harabasz);
            emit(Method::QfAverage, sil_sum / count, db_sum / count, ch_sum / count);
            emit(Method::QfBest, result.cells[best].silhouette, result.cells[best].davies_bouldin,
                 result.cells[best].calinski_harabasz);
        }

        if (!qnn_cells.empty()) {
            std::size_t best = qnn_cells.front();
            for (const auto idx : qnn_cells)
                if (result.cells[idx].silhouette > result.cells[best].silhouette) best = idx;
            const auto& c = result.cells[best];
            result.rows.push_back(MetricsRow{k, Method::Qnn, c.depth, c.epoch, c.silhouette,
                                             c.davies_bouldin, c.calinski_harabasz});
        }
    }
    return result;
}

}  // namespace qcluster::cluster
