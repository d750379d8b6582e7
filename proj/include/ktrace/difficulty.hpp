#pragma once

// Problem difficulty bins from first-attempt success rates over training
// students. Problems attempted by fewer than min_support students, unseen
// problems, and datasets without problem information all resolve to bin 5.

#include <algorithm>
#include <ostream>
#include <unordered_set>
#include <vector>

#include "ktrace/common.hpp"
#include "ktrace/csv.hpp"
#include "ktrace/dataset.hpp"

namespace kt {

struct DifficultyTable {
    std::vector<int> bins;     // per problem index; -1 when below support
    std::vector<int> support;  // attempting-student count per problem
    int default_bin = 5;
};

// Success-rate decile from integer counts: min(floor(10*succ/att), 9).
// A high bin means a high success rate.
inline int difficulty_bin(long long successes, long long attempts) {
    if (attempts <= 0) return 5;
    return static_cast<int>(std::min<long long>(successes * 10 / attempts, 9));
}

inline DifficultyTable compute_difficulty(const Dataset& data, const std::vector<int>& students,
                                          int min_support = 4) {
    DifficultyTable table;
    const int n_problems = data.n_problems();
    table.bins.assign(n_problems, -1);
    table.support.assign(n_problems, 0);
    if (n_problems == 0) return table;

    std::vector<long long> succ(n_problems, 0);
    std::unordered_set<int> seen;
    for (int si : students) {
        seen.clear();
        for (const auto& r : data.students[si]) {
            if (r.problem < 0) continue;
            if (!seen.insert(r.problem).second) continue;  // first attempt only
            ++table.support[r.problem];
            succ[r.problem] += r.correct;
        }
    }
    for (int pj = 0; pj < n_problems; ++pj) {
        if (table.support[pj] >= min_support) {
            table.bins[pj] = difficulty_bin(succ[pj], table.support[pj]);
        }
    }
    return table;
}

inline int difficulty_lookup(const DifficultyTable& table, int problem) {
    if (problem < 0 || problem >= static_cast<int>(table.bins.size())) return table.default_bin;
    const int b = table.bins[problem];
    return b < 0 ? table.default_bin : b;
}

inline void save_difficulty(const DifficultyTable& table, const Dataset& data, std::ostream& os) {
    csv::write_row(os, {"problem_id", "bin", "support"});
    for (int pj = 0; pj < static_cast<int>(table.bins.size()); ++pj) {
        csv::write_row(os, {data.problem_ids[pj], std::to_string(difficulty_lookup(table, pj)),
                            std::to_string(table.support[pj])});
    }
}

}  // namespace kt
