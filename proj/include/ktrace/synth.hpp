#pragma once

// Synthetic interaction generator: students sampled from the two-state
// mastery process per skill (known parameters), optionally with outcome
// probabilities shifted by an injected per-problem difficulty bin and a
// per-student ability level. Used for parameter-recovery and pipeline
// oracles.

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ktrace/bkt.hpp"
#include "ktrace/common.hpp"
#include "ktrace/csv.hpp"
#include "ktrace/dataset.hpp"

namespace kt {

struct SynthSpec {
    int students = 500;
    int skills = 1;
    int attempts = 50;            // per student
    int problems_per_skill = 60;  // pool size; bins 0..9 injected round-robin
    BktParams params{0.3, 0.2, 0.15, 0.1};
    bool per_skill_params = false;  // sample params per skill instead of fixed
    double difficulty_weight = 0.0;  // shifts P(correct) by bin, +- weight/2
    // cross-skill ability groups in {-1,0,+1}: P(correct) shifts by
    // +-weight with opposite sign on even and odd skills, so the group is
    // only observable through the per-skill success pattern
    double ability_weight = 0.0;
    std::uint64_t seed = 7;
};

struct SynthResult {
    Dataset data;
    std::vector<BktParams> true_params;  // per skill
    std::vector<int> true_bins;          // per problem index
    std::vector<double> ability;         // per student, in {-1,0,1}
};

inline SynthResult synthesize(const SynthSpec& spec) {
    if (spec.students < 1 || spec.skills < 1 || spec.attempts < 1 ||
        spec.problems_per_skill < 1) {
        throw Error("synthesize: counts must be positive");
    }
    auto check = [](double p, const char* name) {
        if (p < 0.0 || p > 1.0) throw Error(std::string("synthesize: ") + name + " not in [0,1]");
    };
    check(spec.params.l0, "l0");
    check(spec.params.t, "t");
    check(spec.params.g, "g");
    check(spec.params.s, "s");

    Rng rng(spec.seed);
    SynthResult out;
    Dataset& d = out.data;

    char buf[32];
    for (int i = 0; i < spec.students; ++i) {
        std::snprintf(buf, sizeof(buf), "stu%05d", i);
        d.student_ids.push_back(buf);
    }
    for (int k = 0; k < spec.skills; ++k) {
        std::snprintf(buf, sizeof(buf), "skill%03d", k);
        d.skill_ids.push_back(buf);
    }
    const int n_problems = spec.skills * spec.problems_per_skill;
    for (int p = 0; p < n_problems; ++p) {
        std::snprintf(buf, sizeof(buf), "prob%05d", p);
        d.problem_ids.push_back(buf);
        out.true_bins.push_back(p % 10);
    }

    out.true_params.resize(spec.skills);
    for (int k = 0; k < spec.skills; ++k) {
        if (spec.per_skill_params) {
            out.true_params[k] = {rng.uniform(0.20, 0.60), rng.uniform(0.05, 0.30),
                                  rng.uniform(0.10, 0.30), rng.uniform(0.05, 0.20)};
        } else {
            out.true_params[k] = spec.params;
        }
    }

    d.students.resize(spec.students);
    for (int si = 0; si < spec.students; ++si) {
        const double ability = static_cast<double>(static_cast<int>(rng.below(3))) - 1.0;
        out.ability.push_back(ability);

        std::vector<char> known(spec.skills);
        for (int k = 0; k < spec.skills; ++k) {
            known[k] = rng.bernoulli(out.true_params[k].l0) ? 1 : 0;
        }
        // per-skill shuffled problem pool; wraps if exhausted
        std::vector<std::vector<int>> pools(spec.skills);
        std::vector<int> cursor(spec.skills, 0);

        auto& rows = d.students[si];
        rows.reserve(spec.attempts);
        for (int t = 0; t < spec.attempts; ++t) {
            const int k = spec.skills == 1 ? 0 : static_cast<int>(rng.below(spec.skills));
            if (pools[k].empty()) {
                pools[k].resize(spec.problems_per_skill);
                for (int j = 0; j < spec.problems_per_skill; ++j) {
                    pools[k][j] = k * spec.problems_per_skill + j;
                }
                rng.shuffle(pools[k]);
            }
            const int problem = pools[k][cursor[k] % spec.problems_per_skill];
            ++cursor[k];

            const BktParams& bp = out.true_params[k];
            double p = known[k] ? 1.0 - bp.s : bp.g;
            if (spec.difficulty_weight != 0.0 || spec.ability_weight != 0.0) {
                p += spec.difficulty_weight * (out.true_bins[problem] - 4.5) / 9.0;
                p += spec.ability_weight * ability * (k % 2 == 0 ? 1.0 : -1.0);
                p = std::clamp(p, 0.02, 0.98);
            }

            Dataset::Row r;
            r.problem = problem;
            r.skill = k;
            r.correct = rng.bernoulli(p) ? 1 : 0;
            r.order = t + 1;
            rows.push_back(r);

            if (!known[k] && rng.bernoulli(bp.t)) known[k] = 1;
        }
    }
    return out;
}

// Ground-truth parameters alongside the generated dataset.
inline void save_truth(const SynthResult& res, std::ostream& os) {
    csv::write_row(os, {"kind", "id", "l0", "t", "g", "s", "bin", "ability"});
    for (std::size_t k = 0; k < res.true_params.size(); ++k) {
        const auto& p = res.true_params[k];
        csv::write_row(os, {"skill", res.data.skill_ids[k], format_g17(p.l0), format_g17(p.t),
                            format_g17(p.g), format_g17(p.s), "", ""});
    }
    for (std::size_t pj = 0; pj < res.true_bins.size(); ++pj) {
        csv::write_row(os, {"problem", res.data.problem_ids[pj], "", "", "", "",
                            std::to_string(res.true_bins[pj]), ""});
    }
    for (std::size_t si = 0; si < res.ability.size(); ++si) {
        csv::write_row(os, {"student", res.data.student_ids[si], "", "", "", "", "",
                            format_g17(res.ability[si])});
    }
}

}  // namespace kt
