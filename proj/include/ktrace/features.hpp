#pragma once

// Per-record feature assembly: skill mastery (scalar), ability profile and
// problem difficulty (one-hot), skill identity (one-hot), plus the target
// outcome. Feature blocks can be dropped for ablation variants.

#include <cstdint>
#include <utility>
#include <vector>

#include "ktrace/bkt.hpp"
#include "ktrace/common.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/difficulty.hpp"
#include "ktrace/profile.hpp"

namespace kt {

struct FeatureStep {
    double mastery = 0.0;    // P(skill mastered) entering the attempt
    int ability = 1;         // 1..ability_slots
    int difficulty_bin = 5;  // 0..9
    int skill = 0;
    std::int8_t target = 0;
};

struct FeatureSequence {
    int student = -1;
    std::vector<FeatureStep> steps;
};

struct FeatureMask {
    bool ability = true;
    bool difficulty = true;
    bool skill = true;
};

struct EncodingSpec {
    int n_skills = 0;
    int ability_slots = 8;  // cluster labels plus the initial label
    FeatureMask mask{};

    int dim() const {
        return 1 + (mask.ability ? ability_slots : 0) + (mask.difficulty ? 10 : 0) +
               (mask.skill ? n_skills : 0);
    }
};

namespace detail {

inline void check_step(const FeatureStep& step, const EncodingSpec& spec) {
    if (step.ability < 1 || step.ability > spec.ability_slots) {
        throw Error("encode_step: ability label out of range");
    }
    if (step.difficulty_bin < 0 || step.difficulty_bin > 9) {
        throw Error("encode_step: difficulty bin out of range");
    }
    if (step.skill < 0 || step.skill >= spec.n_skills) {
        throw Error("encode_step: skill index out of range");
    }
}

// nonzero entries of the encoded vector, in index order
inline void encode_sparse(const FeatureStep& step, const EncodingSpec& spec,
                          std::vector<std::pair<int, double>>& out) {
    check_step(step, spec);
    out.clear();
    if (step.mastery != 0.0) out.emplace_back(0, step.mastery);
    int base = 1;
    if (spec.mask.ability) {
        out.emplace_back(base + step.ability - 1, 1.0);
        base += spec.ability_slots;
    }
    if (spec.mask.difficulty) {
        out.emplace_back(base + step.difficulty_bin, 1.0);
        base += 10;
    }
    if (spec.mask.skill) {
        out.emplace_back(base + step.skill, 1.0);
    }
}

}  // namespace detail

inline std::vector<double> encode_step(const FeatureStep& step, const EncodingSpec& spec) {
    std::vector<std::pair<int, double>> sparse;
    detail::encode_sparse(step, spec, sparse);
    std::vector<double> v(spec.dim(), 0.0);
    for (const auto& [i, x] : sparse) v[i] = x;
    return v;
}

// Full encoding: [mastery | ability(8) | difficulty(10) | skill(n_skills)],
// length 19 + n_skills.
inline std::vector<double> encode_step(const FeatureStep& step, int n_skills) {
    return encode_step(step, EncodingSpec{n_skills});
}

// Assembles one sequence per student from per-record features. All three
// feature sources must be computed from training-fold statistics; each step
// is causally computable before its outcome is observed.
inline std::vector<FeatureSequence> build_sequences(
    const Dataset& data, const std::vector<int>& students,
    const std::vector<std::vector<double>>& mastery,
    const std::vector<std::vector<int>>& ability_labels, const DifficultyTable& difficulty) {
    std::vector<FeatureSequence> out;
    out.reserve(students.size());
    for (int si : students) {
        const auto& recs = data.students[si];
        if (mastery[si].size() != recs.size() || ability_labels[si].size() != recs.size()) {
            throw Error("build_sequences: feature length mismatch for student '" +
                        data.student_ids[si] + "'");
        }
        FeatureSequence seq;
        seq.student = si;
        seq.steps.reserve(recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            FeatureStep step;
            step.mastery = mastery[si][i];
            step.ability = ability_labels[si][i];
            step.difficulty_bin = difficulty_lookup(difficulty, recs[i].problem);
            step.skill = recs[i].skill;
            step.target = recs[i].correct;
            seq.steps.push_back(step);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace kt
