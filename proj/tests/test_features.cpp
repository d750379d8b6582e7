#include <gtest/gtest.h>

#include <sstream>

#include "ktrace/features.hpp"

namespace {

TEST(EncodeStep, LayoutAndLength) {
    kt::FeatureStep step;
    step.mastery = 0.5;
    step.ability = 1;
    step.difficulty_bin = 5;
    step.skill = 0;
    const auto v = kt::encode_step(step, 3);
    ASSERT_EQ(v.size(), 22u);  // 1 + 8 + 10 + 3
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(v[1], 1.0);       // ability slot 1
    EXPECT_DOUBLE_EQ(v[1 + 8 + 5], 1.0);  // difficulty slot 5
    EXPECT_DOUBLE_EQ(v[1 + 8 + 10], 1.0);  // skill slot 0
    int ones = 0;
    for (double x : v) {
        if (x == 1.0) ++ones;
    }
    EXPECT_EQ(ones, 3);
}

TEST(EncodeStep, OneHotBlocksHaveExactlyOneBit) {
    for (int ability = 1; ability <= 8; ++ability) {
        for (int bin = 0; bin <= 9; ++bin) {
            kt::FeatureStep step{0.3, ability, bin, 1, 0};
            const auto v = kt::encode_step(step, 4);
            int a = 0, d = 0, s = 0;
            for (int i = 0; i < 8; ++i) a += v[1 + i] == 1.0;
            for (int i = 0; i < 10; ++i) d += v[9 + i] == 1.0;
            for (int i = 0; i < 4; ++i) s += v[19 + i] == 1.0;
            EXPECT_EQ(a, 1);
            EXPECT_EQ(d, 1);
            EXPECT_EQ(s, 1);
        }
    }
}

TEST(EncodeStep, SkillChangesOnlySkillBlock) {
    kt::FeatureStep a{0.4, 3, 2, 0, 1};
    kt::FeatureStep b = a;
    b.skill = 2;
    const auto va = kt::encode_step(a, 5);
    const auto vb = kt::encode_step(b, 5);
    for (std::size_t i = 0; i < 19; ++i) EXPECT_EQ(va[i], vb[i]) << i;
    EXPECT_NE(va[19], vb[19]);
}

TEST(EncodeStep, OutOfRangeIsFatal) {
    kt::EncodingSpec spec{3};
    EXPECT_THROW(kt::encode_step({0.5, 0, 5, 0, 0}, spec), kt::Error);   // ability 0
    EXPECT_THROW(kt::encode_step({0.5, 9, 5, 0, 0}, spec), kt::Error);   // ability 9
    EXPECT_THROW(kt::encode_step({0.5, 1, 10, 0, 0}, spec), kt::Error);  // bin 10
    EXPECT_THROW(kt::encode_step({0.5, 1, 5, 3, 0}, spec), kt::Error);   // skill 3
}

TEST(EncodeStep, MaskDropsBlocks) {
    kt::EncodingSpec spec{3};
    spec.mask = {false, false, true};
    EXPECT_EQ(spec.dim(), 4);
    kt::FeatureStep step{0.5, 4, 7, 2, 1};
    const auto v = kt::encode_step(step, spec);
    ASSERT_EQ(v.size(), 4u);
    EXPECT_DOUBLE_EQ(v[0], 0.5);
    EXPECT_DOUBLE_EQ(v[3], 1.0);

    spec.mask = {false, true, true};
    EXPECT_EQ(spec.dim(), 14);
    spec.mask = {true, true, true};
    EXPECT_EQ(spec.dim(), 22);
}

kt::Dataset two_skill_student() {
    std::istringstream in(
        "student_id,problem_id,skill_id,correct,order\n"
        "a,p1,sA,1,1\n"
        "a,p2,sA,1,2\n");
    return kt::load_interactions(in, kt::preset("canonical"));
}

TEST(BuildSequences, ThreadsMasteryChainIntoSteps) {
    const auto d = two_skill_student();
    const std::vector<kt::BktParams> table{{0.5, 0.1, 0.2, 0.1}};
    const auto mastery = kt::trace_dataset(d, table).mastery;
    const std::vector<std::vector<int>> labels{{1, 1}};
    kt::DifficultyTable diff;
    diff.bins = {7, -1};
    diff.support = {5, 1};

    const auto seqs = kt::build_sequences(d, {0}, mastery, labels, diff);
    ASSERT_EQ(seqs.size(), 1u);
    ASSERT_EQ(seqs[0].steps.size(), 2u);
    EXPECT_DOUBLE_EQ(seqs[0].steps[0].mastery, 0.5);
    EXPECT_NEAR(seqs[0].steps[1].mastery, 46.0 / 55.0, 1e-12);
    EXPECT_EQ(seqs[0].steps[0].ability, 1);
    EXPECT_EQ(seqs[0].steps[0].difficulty_bin, 7);  // p1 has a stored bin
    EXPECT_EQ(seqs[0].steps[1].difficulty_bin, 5);  // p2 below support
    EXPECT_EQ(seqs[0].steps[0].target, 1);
}

TEST(BuildSequences, NoProblemInfoGivesBinFive) {
    std::istringstream in(
        "user_id,sequence_id,correct,log_id\n"
        "a,s1,1,1\n"
        "a,s1,0,2\n");
    const auto d = kt::load_interactions(in, kt::preset("ass14"));
    const std::vector<kt::BktParams> table{{0.5, 0.1, 0.2, 0.1}};
    const auto mastery = kt::trace_dataset(d, table).mastery;
    const std::vector<std::vector<int>> labels{{1, 1}};
    kt::DifficultyTable diff;  // empty: dataset has no problems
    const auto seqs = kt::build_sequences(d, {0}, mastery, labels, diff);
    for (const auto& step : seqs[0].steps) EXPECT_EQ(step.difficulty_bin, 5);
}

TEST(BuildSequences, MissingFeatureIsFatal) {
    const auto d = two_skill_student();
    const std::vector<std::vector<double>> short_mastery{{0.5}};  // one entry, two records
    const std::vector<std::vector<int>> labels{{1, 1}};
    kt::DifficultyTable diff;
    EXPECT_THROW(kt::build_sequences(d, {0}, short_mastery, labels, diff), kt::Error);
}

TEST(BuildSequences, CausalUnderTruncation) {
    // features of early steps must not change when later records are removed
    std::ostringstream os;
    os << "student_id,problem_id,skill_id,correct,order\n";
    for (int i = 0; i < 50; ++i) {
        os << "a,p" << i << ",s" << (i % 3) << "," << (i % 2) << "," << (i + 1) << "\n";
    }
    std::istringstream full_in(os.str());
    const auto full = kt::load_interactions(full_in, kt::preset("canonical"));

    kt::Dataset truncated = full;
    truncated.students[0].resize(30);

    const std::vector<kt::BktParams> table{
        {0.4, 0.1, 0.2, 0.1}, {0.5, 0.2, 0.25, 0.05}, {0.6, 0.05, 0.1, 0.2}};
    kt::AbilityModel ability;
    ability.k = 2;
    ability.centroids = {{0.2, 0.2, 0.2}, {0.8, 0.8, 0.8}};
    kt::DifficultyTable diff;
    diff.bins.assign(full.n_problems(), 3);
    diff.support.assign(full.n_problems(), 10);

    auto build = [&](const kt::Dataset& d) {
        const auto mastery = kt::trace_dataset(d, table).mastery;
        const auto labels = kt::profile_labels(d, ability, 20);
        return kt::build_sequences(d, {0}, mastery, labels, diff);
    };
    const auto seq_full = build(full);
    const auto seq_trunc = build(truncated);
    for (std::size_t i = 0; i < 30; ++i) {
        EXPECT_EQ(seq_full[0].steps[i].mastery, seq_trunc[0].steps[i].mastery) << i;
        EXPECT_EQ(seq_full[0].steps[i].ability, seq_trunc[0].steps[i].ability) << i;
        EXPECT_EQ(seq_full[0].steps[i].difficulty_bin, seq_trunc[0].steps[i].difficulty_bin) << i;
    }
}

}  // namespace
