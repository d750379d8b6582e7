#pragma once

// Temporal ability profiles: cumulative per-skill success-rate vectors over
// fixed attempt windows, clustered with seeded Lloyd k-means. Label 1 is
// reserved for the initial interval before any evaluation; cluster labels
// are 2..k+1 in canonical centroid order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "ktrace/common.hpp"
#include "ktrace/dataset.hpp"

namespace kt {

// Interval z (1-based) covers attempts ((z-1)*window, z*window]; a trailing
// partial window forms the final interval.
inline std::vector<std::pair<std::size_t, std::size_t>> segment_intervals(std::size_t n_attempts,
                                                                          int window = 20) {
    if (window < 1) throw Error("segment_intervals: window must be >= 1");
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t w = static_cast<std::size_t>(window);
    for (std::size_t begin = 0; begin < n_attempts; begin += w) {
        out.emplace_back(begin, std::min(begin + w, n_attempts));
    }
    return out;
}

// Cumulative success rate per skill over the first `upto` records; skills
// with no attempts get 0.5.
inline std::vector<double> performance_vector(const std::vector<Dataset::Row>& records,
                                              std::size_t upto, int n_skills) {
    std::vector<double> succ(n_skills, 0.0), att(n_skills, 0.0);
    upto = std::min(upto, records.size());
    for (std::size_t i = 0; i < upto; ++i) {
        att[records[i].skill] += 1.0;
        succ[records[i].skill] += records[i].correct;
    }
    std::vector<double> v(n_skills, 0.5);
    for (int j = 0; j < n_skills; ++j) {
        if (att[j] > 0.0) v[j] = succ[j] / att[j];
    }
    return v;
}

struct AbilityModel {
    int k = 7;
    std::vector<std::vector<double>> centroids;  // canonical order: mean ascending
};

struct AbilityProfile {
    int student = -1;
    int interval = 0;
    int label = 1;
};

struct KmeansFit {
    AbilityModel model;
    std::vector<double> objective;  // total squared distance after each assignment pass
    int iterations = 0;
};

namespace detail {

inline double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline int nearest_centroid(const std::vector<std::vector<double>>& centroids,
                            const std::vector<double>& v, double* dist_out = nullptr) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = sqdist(centroids[c], v);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    if (dist_out) *dist_out = best_d;
    return best;
}

}  // namespace detail

// Lloyd's algorithm. Initial centroids are k distinct input vectors chosen
// by seeded shuffle (or farthest-point seeding when requested). Runs until
// the assignment is stable or max_iter passes. Empty clusters are reseeded
// to the point farthest from their current centroid.
inline KmeansFit fit_kmeans(const std::vector<std::vector<double>>& vectors, int k = 7,
                            std::uint64_t seed = 42, int max_iter = 100,
                            bool farthest_seeding = false) {
    if (k < 1) throw Error("fit_kmeans: k must be >= 1");
    if (vectors.empty()) throw Error("fit_kmeans: no vectors");
    const std::size_t dim = vectors[0].size();
    for (const auto& v : vectors) {
        if (v.size() != dim) throw Error("fit_kmeans: inconsistent vector lengths");
    }

    KmeansFit fit;
    auto& centroids = fit.model.centroids;
    fit.model.k = k;

    std::vector<std::size_t> order(vectors.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    auto is_chosen = [&](const std::vector<double>& v) {
        for (const auto& c : centroids) {
            if (c == v) return true;
        }
        return false;
    };
    if (farthest_seeding) {
        centroids.push_back(vectors[order[0]]);
        while (static_cast<int>(centroids.size()) < k) {
            double best_d = -1.0;
            std::size_t best_i = 0;
            for (std::size_t i = 0; i < vectors.size(); ++i) {
                double d;
                detail::nearest_centroid(centroids, vectors[i], &d);
                if (d > best_d) {
                    best_d = d;
                    best_i = i;
                }
            }
            if (best_d <= 0.0) throw Error("fit_kmeans: fewer distinct vectors than k");
            centroids.push_back(vectors[best_i]);
        }
    } else {
        for (std::size_t i : order) {
            if (static_cast<int>(centroids.size()) == k) break;
            if (!is_chosen(vectors[i])) centroids.push_back(vectors[i]);
        }
        if (static_cast<int>(centroids.size()) < k) {
            throw Error("fit_kmeans: fewer distinct vectors than k");
        }
    }

    std::vector<int> assign(vectors.size(), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            double d;
            const int c = detail::nearest_centroid(centroids, vectors[i], &d);
            objective += d;
            if (c != assign[i]) {
                assign[i] = c;
                changed = true;
            }
        }
        fit.objective.push_back(objective);
        fit.iterations = iter + 1;
        if (!changed) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            ++counts[assign[i]];
            const auto& v = vectors[i];
            auto& s = sums[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) s[j] += v[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed to the point farthest from this centroid
                double best_d = -1.0;
                std::size_t best_i = 0;
                for (std::size_t i = 0; i < vectors.size(); ++i) {
                    const double d = detail::sqdist(centroids[c], vectors[i]);
                    if (d > best_d) {
                        best_d = d;
                        best_i = i;
                    }
                }
                centroids[c] = vectors[best_i];
            } else {
                for (std::size_t j = 0; j < dim; ++j) {
                    centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
                }
            }
        }
    }

    // canonical order: ascending mean component, so labels are reproducible
    std::stable_sort(centroids.begin(), centroids.end(),
                     [](const std::vector<double>& a, const std::vector<double>& b) {
                         const double ma = std::accumulate(a.begin(), a.end(), 0.0);
                         const double mb = std::accumulate(b.begin(), b.end(), 0.0);
                         return ma < mb;
                     });
    return fit;
}

// Nearest-centroid label in 2..k+1; ties go to the lower canonical index.
inline int assign_profile(const AbilityModel& model, const std::vector<double>& v) {
    if (model.centroids.empty()) throw Error("assign_profile: empty model");
    if (v.size() != model.centroids[0].size()) {
        throw Error("assign_profile: dimension mismatch");
    }
    return 2 + detail::nearest_centroid(model.centroids, v);
}

// All cumulative vectors (one per interval z >= 1) for the given students;
// the k-means training set.
inline std::vector<std::vector<double>> training_vectors(const Dataset& data,
                                                         const std::vector<int>& students,
                                                         int window = 20) {
    const int n_skills = data.n_skills();
    std::vector<std::vector<double>> out;
    std::vector<double> succ(n_skills), att(n_skills);
    for (int si : students) {
        const auto& recs = data.students[si];
        std::fill(succ.begin(), succ.end(), 0.0);
        std::fill(att.begin(), att.end(), 0.0);
        for (const auto& [begin, end] : segment_intervals(recs.size(), window)) {
            for (std::size_t i = begin; i < end; ++i) {
                att[recs[i].skill] += 1.0;
                succ[recs[i].skill] += recs[i].correct;
            }
            std::vector<double> v(n_skills, 0.5);
            for (int j = 0; j < n_skills; ++j) {
                if (att[j] > 0.0) v[j] = succ[j] / att[j];
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

// Per-record ability labels for one student. Records in interval 1 are
// labeled 1; records in interval z >= 2 get the cluster of the cumulative
// vector through interval z-1, so the label is available before the
// interval's outcomes are observed.
inline std::vector<int> student_profile_labels(const std::vector<Dataset::Row>& records,
                                               const AbilityModel& model, int n_skills,
                                               int window = 20) {
    std::vector<int> labels(records.size(), 1);
    const auto intervals = segment_intervals(records.size(), window);
    std::vector<double> succ(n_skills, 0.0), att(n_skills, 0.0);
    for (std::size_t z = 0; z < intervals.size(); ++z) {
        const auto [begin, end] = intervals[z];
        if (z >= 1) {
            std::vector<double> v(n_skills, 0.5);
            for (int j = 0; j < n_skills; ++j) {
                if (att[j] > 0.0) v[j] = succ[j] / att[j];
            }
            const int label = assign_profile(model, v);
            for (std::size_t i = begin; i < end; ++i) labels[i] = label;
        }
        for (std::size_t i = begin; i < end; ++i) {
            att[records[i].skill] += 1.0;
            succ[records[i].skill] += records[i].correct;
        }
    }
    return labels;
}

inline std::vector<std::vector<int>> profile_labels(const Dataset& data,
                                                    const AbilityModel& model, int window = 20) {
    std::vector<std::vector<int>> out(data.n_students());
    for (int si = 0; si < data.n_students(); ++si) {
        out[si] = student_profile_labels(data.students[si], model, data.n_skills(), window);
    }
    return out;
}

// Per-interval assignments in export form (student, interval, label).
inline std::vector<AbilityProfile> profile_assignments(const Dataset& data,
                                                       const AbilityModel& model,
                                                       int window = 20) {
    std::vector<AbilityProfile> out;
    for (int si = 0; si < data.n_students(); ++si) {
        const auto& recs = data.students[si];
        const auto intervals = segment_intervals(recs.size(), window);
        std::vector<double> succ(data.n_skills(), 0.0), att(data.n_skills(), 0.0);
        for (std::size_t z = 0; z < intervals.size(); ++z) {
            AbilityProfile ap;
            ap.student = si;
            ap.interval = static_cast<int>(z) + 1;
            if (z >= 1) {
                std::vector<double> v(data.n_skills(), 0.5);
                for (int j = 0; j < data.n_skills(); ++j) {
                    if (att[j] > 0.0) v[j] = succ[j] / att[j];
                }
                ap.label = assign_profile(model, v);
            }
            out.push_back(ap);
            for (std::size_t i = intervals[z].first; i < intervals[z].second; ++i) {
                att[recs[i].skill] += 1.0;
                succ[recs[i].skill] += recs[i].correct;
            }
        }
    }
    return out;
}

}  // namespace kt
