#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ktrace/difficulty.hpp"
#include "ktrace/synth.hpp"

namespace {

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
            const double mid = 0.5 * static_cast<double>(i + j + 1);
            for (std::size_t k = i; k < j; ++k) r[idx[k]] = mid;
            i = j;
        }
        return r;
    };
    const auto ra = ranks(a);
    const auto rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double saa = 0, sbb = 0, sab = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
        sab += (ra[i] - ma) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

TEST(Synth, NoiselessAllCorrect) {
    kt::SynthSpec spec;
    spec.students = 20;
    spec.attempts = 15;
    spec.params = {1.0, 0.0, 0.0, 0.0};
    const auto res = kt::synthesize(spec);
    for (const auto& rows : res.data.students) {
        for (const auto& r : rows) EXPECT_EQ(r.correct, 1);
    }
}

TEST(Synth, DeterministicGivenSeed) {
    kt::SynthSpec spec;
    spec.students = 30;
    spec.skills = 4;
    spec.attempts = 25;
    spec.difficulty_weight = 0.3;
    spec.seed = 123;
    const auto a = kt::synthesize(spec);
    const auto b = kt::synthesize(spec);
    ASSERT_EQ(a.data.n_records(), b.data.n_records());
    for (int si = 0; si < a.data.n_students(); ++si) {
        for (std::size_t i = 0; i < a.data.students[si].size(); ++i) {
            EXPECT_EQ(a.data.students[si][i].correct, b.data.students[si][i].correct);
            EXPECT_EQ(a.data.students[si][i].problem, b.data.students[si][i].problem);
        }
    }
}

TEST(Synth, ShapeAndGroundTruth) {
    kt::SynthSpec spec;
    spec.students = 10;
    spec.skills = 3;
    spec.attempts = 12;
    spec.problems_per_skill = 20;
    spec.per_skill_params = true;
    const auto res = kt::synthesize(spec);
    EXPECT_EQ(res.data.n_students(), 10);
    EXPECT_EQ(res.data.n_skills(), 3);
    EXPECT_EQ(res.data.n_problems(), 60);
    EXPECT_EQ(res.true_params.size(), 3u);
    EXPECT_EQ(res.true_bins.size(), 60u);
    for (int b : res.true_bins) {
        EXPECT_GE(b, 0);
        EXPECT_LE(b, 9);
    }
    for (double a : res.ability) EXPECT_TRUE(a == -1.0 || a == 0.0 || a == 1.0);
    for (const auto& p : res.true_params) {
        EXPECT_GE(p.l0, 0.2);
        EXPECT_LE(p.l0, 0.6);
        EXPECT_LE(p.g, 0.3);
        EXPECT_LE(p.s, 0.2);
    }
    // each student's attempts stay within their skill's problem block
    for (const auto& rows : res.data.students) {
        for (const auto& r : rows) {
            EXPECT_EQ(r.problem / spec.problems_per_skill, r.skill);
        }
    }
}

TEST(Synth, SingleTrialParameterRecovery) {
    kt::SynthSpec spec;
    spec.students = 500;
    spec.attempts = 50;
    spec.params = {0.3, 0.2, 0.15, 0.1};
    spec.seed = 17;
    const auto res = kt::synthesize(spec);
    std::vector<std::vector<std::int8_t>> seqs;
    for (const auto& rows : res.data.students) {
        std::vector<std::int8_t> seq;
        for (const auto& r : rows) seq.push_back(r.correct);
        seqs.push_back(std::move(seq));
    }
    const auto fit = kt::fit_skill(seqs);
    EXPECT_NEAR(fit.params.l0, 0.3, 0.05 + 1e-9);
    EXPECT_NEAR(fit.params.t, 0.2, 0.05 + 1e-9);
    EXPECT_NEAR(fit.params.g, 0.15, 0.05 + 1e-9);
    EXPECT_NEAR(fit.params.s, 0.1, 0.05 + 1e-9);
}

TEST(Synth, DifficultyRoundTripSpearman) {
    kt::SynthSpec spec;
    spec.students = 400;
    spec.skills = 4;
    spec.attempts = 40;
    spec.problems_per_skill = 30;
    spec.difficulty_weight = 0.35;
    spec.seed = 29;
    const auto res = kt::synthesize(spec);

    std::vector<int> students(res.data.n_students());
    std::iota(students.begin(), students.end(), 0);
    const auto table = kt::compute_difficulty(res.data, students, 4);

    std::vector<double> injected, computed;
    for (int pj = 0; pj < res.data.n_problems(); ++pj) {
        if (table.bins[pj] < 0) continue;
        injected.push_back(res.true_bins[pj]);
        computed.push_back(table.bins[pj]);
    }
    ASSERT_GT(injected.size(), 50u);
    EXPECT_GT(spearman(injected, computed), 0.8);
}

}  // namespace
