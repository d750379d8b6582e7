#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <vector>

#include "ktrace/predictor.hpp"

namespace {

kt::EncodedSeq random_seq(int steps, int input_dim, int n_skills, std::uint64_t seed,
                          int max_feats = 4) {
    kt::Rng rng(seed);
    kt::EncodedSeq seq;
    std::vector<std::pair<int, double>> feats;
    for (int t = 0; t < steps; ++t) {
        feats.clear();
        const int nf = 1 + static_cast<int>(rng.below(max_feats));
        for (int f = 0; f < nf; ++f) {
            feats.emplace_back(static_cast<int>(rng.below(input_dim)), rng.uniform(-1.0, 1.0));
        }
        seq.push_step(feats, static_cast<int>(rng.below(n_skills)), rng.bernoulli(0.5) ? 1 : 0);
    }
    return seq;
}

// Central finite differences against the analytic gradient; relative error
// with an absolute floor so finite-difference roundoff cannot dominate the
// denominator on near-zero gradients.
double max_grad_rel_error(kt::RnnModel& m, const kt::EncodedSeq& seq) {
    const auto analytic = kt::gradient(m, seq);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < m.theta.size(); ++i) {
        const double saved = m.theta[i];
        m.theta[i] = saved + h;
        const double up = kt::total_loss(m, seq);
        m.theta[i] = saved - h;
        const double down = kt::total_loss(m, seq);
        m.theta[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-4});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

TEST(Forward, AllZeroWeightsGiveHalf) {
    for (auto cell : {kt::CellKind::simple, kt::CellKind::gated}) {
        kt::RnnModel m = kt::init_model(cell, 6, 4, 3, 1);
        std::fill(m.theta.begin(), m.theta.end(), 0.0);
        const auto seq = random_seq(5, 6, 3, 2);
        const auto out = kt::forward(m, seq);
        for (double y : out.outputs) EXPECT_DOUBLE_EQ(y, 0.5);
        const auto p = kt::predict(m, seq);
        for (double v : p) EXPECT_DOUBLE_EQ(v, 0.5);
    }
}

TEST(Forward, ZeroRecurrentWeightsMakeStepsIndependent) {
    // simple cell: with Wh = 0 the output at step t is a function of x_t only
    kt::RnnModel m = kt::init_model(kt::CellKind::simple, 6, 4, 3, 7);
    std::fill(m.theta.begin() + m.wh_off(0), m.theta.begin() + m.b_off(0), 0.0);

    auto a = random_seq(5, 6, 3, 11);
    auto b = random_seq(5, 6, 3, 12);
    // rebuild b with a's final two steps
    kt::EncodedSeq c;
    std::vector<std::pair<int, double>> feats;
    for (int t = 0; t < 5; ++t) {
        const kt::EncodedSeq& src = t < 3 ? b : a;
        feats.clear();
        for (std::int32_t k = src.offsets[t]; k < src.offsets[t + 1]; ++k) {
            feats.emplace_back(src.findex[k], src.fvalue[k]);
        }
        c.push_step(feats, src.skill[t], src.target[t]);
    }
    const auto pa = kt::predict(m, a);
    const auto pc = kt::predict(m, c);
    EXPECT_DOUBLE_EQ(pa[3], pc[3]);
    EXPECT_DOUBLE_EQ(pa[4], pc[4]);
}

// Independent dense re-implementation of the forward recurrences, reading
// the documented parameter layout.
std::vector<double> reference_outputs(const kt::RnnModel& m, const kt::EncodedSeq& seq) {
    const int H = m.hidden;
    const int S = m.n_skills;
    const double* th = m.theta.data();
    auto wx = [&](int g, int i, int r) { return th[m.wx_off(g) + static_cast<std::size_t>(i) * H + r]; };
    auto wh = [&](int g, int r, int c) { return th[m.wh_off(g) + static_cast<std::size_t>(r) * H + c]; };
    auto b = [&](int g, int r) { return th[m.b_off(g) + r]; };

    std::vector<double> x(m.input_dim), h(H, 0.0), c(H, 0.0), out;
    for (int t = 0; t < seq.steps(); ++t) {
        std::fill(x.begin(), x.end(), 0.0);
        for (std::int32_t k = seq.offsets[t]; k < seq.offsets[t + 1]; ++k) {
            x[seq.findex[k]] += seq.fvalue[k];
        }
        auto pre = [&](int g, int r) {
            double a = b(g, r);
            for (int i = 0; i < m.input_dim; ++i) a += wx(g, i, r) * x[i];
            for (int j = 0; j < H; ++j) a += wh(g, r, j) * h[j];
            return a;
        };
        std::vector<double> hn(H);
        if (m.cell == kt::CellKind::simple) {
            for (int r = 0; r < H; ++r) hn[r] = std::tanh(pre(0, r));
        } else {
            for (int r = 0; r < H; ++r) {
                const double gi = kt::sigmoid(pre(kt::gate::kIn, r));
                const double gf = kt::sigmoid(pre(kt::gate::kForget, r));
                const double gc = std::tanh(pre(kt::gate::kCand, r));
                const double go = kt::sigmoid(pre(kt::gate::kOut, r));
                c[r] = gf * c[r] + gi * gc;
                hn[r] = go * std::tanh(c[r]);
            }
        }
        h = hn;
        for (int s = 0; s < S; ++s) {
            double z = th[m.by_off() + s];
            for (int r = 0; r < H; ++r) z += th[m.wy_off() + static_cast<std::size_t>(s) * H + r] * h[r];
            out.push_back(kt::sigmoid(z));
        }
    }
    return out;
}

TEST(Forward, MatchesIndependentRecurrence) {
    for (auto cell : {kt::CellKind::simple, kt::CellKind::gated}) {
        kt::RnnModel m = kt::init_model(cell, 7, 3, 2, 31);
        const auto seq = random_seq(9, 7, 2, 32);
        const auto got = kt::forward(m, seq);
        const auto want = reference_outputs(m, seq);
        ASSERT_EQ(got.outputs.size(), want.size());
        for (std::size_t i = 0; i < want.size(); ++i) {
            EXPECT_NEAR(got.outputs[i], want[i], 1e-12) << "cell " << kt::cell_name(cell);
        }
        // predict() picks the target skill's output
        const auto p = kt::predict(m, seq);
        for (int t = 0; t < seq.steps(); ++t) {
            EXPECT_NEAR(p[t], want[static_cast<std::size_t>(t) * 2 + seq.skill[t]], 1e-12);
        }
    }
}

TEST(Loss, UniformHalfIsLogTwo) {
    std::vector<double> p(10, 0.5);
    std::vector<std::int8_t> r(10, 1);
    EXPECT_NEAR(kt::sequence_loss(p, r) / 10.0, std::log(2.0), 1e-12);
}

TEST(Loss, ExactPredictionsApproachZero) {
    std::vector<double> p{1.0 - 1e-12, 1e-12};
    std::vector<std::int8_t> r{1, 0};
    EXPECT_NEAR(kt::sequence_loss(p, r), 0.0, 1e-8);
}

TEST(Loss, ThreeStepToyMatchesScalarComputation) {
    std::vector<double> p{0.7, 0.3, 0.9};
    std::vector<std::int8_t> r{1, 0, 0};
    const double want = -(std::log(0.7) + std::log(0.7) + std::log(0.1));
    EXPECT_NEAR(kt::sequence_loss(p, r), want, 1e-12);
}

TEST(Loss, ClampsExactZeroAndOne) {
    std::vector<double> p{0.0, 1.0};
    std::vector<std::int8_t> r{1, 0};
    const double loss = kt::sequence_loss(p, r);
    EXPECT_TRUE(std::isfinite(loss));
    EXPECT_NEAR(loss, -2.0 * std::log(1e-9), 1e-6);
}

TEST(Gradient, MatchesFiniteDifferencesBothCells) {
    for (auto cell : {kt::CellKind::simple, kt::CellKind::gated}) {
        kt::RnnModel m = kt::init_model(cell, 22, 5, 3, 1234);
        const auto seq = random_seq(7, 22, 3, 88);
        const double err = max_grad_rel_error(m, seq);
        EXPECT_LE(err, 1e-4) << "cell " << kt::cell_name(cell);
    }
}

TEST(Gradient, OutputRowsOfUntargetedSkillsAreZero) {
    kt::RnnModel m = kt::init_model(kt::CellKind::gated, 6, 4, 5, 3);
    kt::EncodedSeq seq;
    std::vector<std::pair<int, double>> feats{{0, 1.0}};
    for (int t = 0; t < 6; ++t) seq.push_step(feats, t % 2, t % 2);  // skills 0 and 1 only
    const auto grad = kt::gradient(m, seq);
    for (int s = 2; s < 5; ++s) {
        for (int r = 0; r < 4; ++r) {
            EXPECT_EQ(grad[m.wy_off() + static_cast<std::size_t>(s) * 4 + r], 0.0);
        }
        EXPECT_EQ(grad[m.by_off() + s], 0.0);
    }
}

TEST(Gradient, OutputBiasIsSumOfResiduals) {
    kt::RnnModel m = kt::init_model(kt::CellKind::simple, 3, 1, 2, 9);
    const auto seq = random_seq(8, 3, 2, 41);
    const auto p = kt::predict(m, seq);
    const auto grad = kt::gradient(m, seq);
    for (int s = 0; s < 2; ++s) {
        double want = 0.0;
        for (int t = 0; t < seq.steps(); ++t) {
            if (seq.skill[t] == s) want += p[t] - static_cast<double>(seq.target[t]);
        }
        EXPECT_NEAR(grad[m.by_off() + s], want, 1e-12);
    }
}

TEST(Gradient, PaddingIsNeutral) {
    kt::RnnModel m = kt::init_model(kt::CellKind::gated, 5, 3, 2, 17);
    const auto seq = random_seq(4, 5, 2, 18);
    kt::EncodedSeq padded = seq;
    const std::vector<std::pair<int, double>> none;
    padded.push_step(none, -1, 0);
    padded.push_step(none, -1, 0);
    const auto ga = kt::gradient(m, seq);
    const auto gb = kt::gradient(m, padded);
    ASSERT_EQ(ga.size(), gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_EQ(ga[i], gb[i]) << i;
    EXPECT_EQ(kt::total_loss(m, seq), kt::total_loss(m, padded));
}

TEST(Predict, CausalUnderTruncation) {
    kt::RnnModel m = kt::init_model(kt::CellKind::gated, 6, 4, 3, 5);
    const auto seq = random_seq(10, 6, 3, 6);
    kt::EncodedSeq prefix;
    std::vector<std::pair<int, double>> feats;
    for (int t = 0; t < 6; ++t) {
        feats.clear();
        for (std::int32_t k = seq.offsets[t]; k < seq.offsets[t + 1]; ++k) {
            feats.emplace_back(seq.findex[k], seq.fvalue[k]);
        }
        prefix.push_step(feats, seq.skill[t], seq.target[t]);
    }
    const auto full = kt::predict(m, seq);
    const auto part = kt::predict(m, prefix);
    for (int t = 0; t < 6; ++t) EXPECT_EQ(full[t], part[t]);
}

TEST(Forward, DropoutOnlyAffectsOutputPath) {
    kt::RnnModel m = kt::init_model(kt::CellKind::gated, 6, 4, 3, 5);
    const auto seq = random_seq(8, 6, 3, 61);
    const auto clean = kt::forward(m, seq, false);
    const auto dropped = kt::forward(m, seq, true, 0.5, 999);
    // recurrent path untouched: hidden states identical
    ASSERT_EQ(clean.hidden.size(), dropped.hidden.size());
    for (std::size_t i = 0; i < clean.hidden.size(); ++i) {
        EXPECT_EQ(clean.hidden[i], dropped.hidden[i]);
    }
    // output path differs somewhere
    bool any_diff = false;
    for (std::size_t i = 0; i < clean.outputs.size(); ++i) {
        if (clean.outputs[i] != dropped.outputs[i]) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
    // train mode off ignores the dropout rate
    const auto off = kt::forward(m, seq, false, 0.5, 999);
    for (std::size_t i = 0; i < clean.outputs.size(); ++i) {
        EXPECT_EQ(clean.outputs[i], off.outputs[i]);
    }
}

std::vector<kt::EncodedSeq> learnable_set(int n_students, int steps, std::uint64_t seed) {
    // feature 0 leaks the target with 90% fidelity; a learnable signal
    kt::Rng rng(seed);
    std::vector<kt::EncodedSeq> out;
    for (int s = 0; s < n_students; ++s) {
        kt::EncodedSeq seq;
        std::vector<std::pair<int, double>> feats;
        for (int t = 0; t < steps; ++t) {
            const int r = rng.bernoulli(0.5) ? 1 : 0;
            const bool leak = rng.bernoulli(0.9);
            feats.clear();
            feats.emplace_back(0, (leak ? r : 1 - r) ? 1.0 : -1.0);
            feats.emplace_back(1 + static_cast<int>(rng.below(4)), 1.0);
            seq.push_step(feats, static_cast<int>(rng.below(3)), r);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

kt::RnnConfig small_config(kt::CellKind cell) {
    kt::RnnConfig cfg;
    cfg.hidden_size = 8;
    cfg.learning_rate = 0.5;
    cfg.batch_size = 8;
    cfg.epochs = 10;
    cfg.dropout_rate = 0.0;
    cfg.cell = cell;
    cfg.seed = 77;
    cfg.validation_every = 0;
    return cfg;
}

TEST(Train, ZeroLearningRateKeepsInitialModel) {
    auto cfg = small_config(kt::CellKind::gated);
    cfg.learning_rate = 0.0;
    cfg.epochs = 1;
    const auto data = learnable_set(10, 15, 5);
    const auto trained = kt::train(cfg, 5, 3, data, {});
    const auto init = kt::init_model(cfg.cell, 5, cfg.hidden_size, 3, kt::mix_seed(cfg.seed, 0x1217));
    ASSERT_EQ(trained.model.theta.size(), init.theta.size());
    for (std::size_t i = 0; i < init.theta.size(); ++i) {
        EXPECT_EQ(trained.model.theta[i], init.theta[i]);
    }
}

TEST(Train, LossDecreasesOnLearnableData) {
    for (auto cell : {kt::CellKind::simple, kt::CellKind::gated}) {
        const auto data = learnable_set(50, 20, 6);
        const auto trained = kt::train(small_config(cell), 5, 3, data, {});
        const auto& loss = trained.report.train_loss;
        ASSERT_EQ(loss.size(), 10u);
        EXPECT_LT(loss[9], loss[0]) << kt::cell_name(cell);
        EXPECT_FALSE(trained.report.diverged);
    }
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto data = learnable_set(20, 15, 7);
    const auto a = kt::train(small_config(kt::CellKind::gated), 5, 3, data, {});
    const auto b = kt::train(small_config(kt::CellKind::gated), 5, 3, data, {});
    EXPECT_EQ(a.report.train_loss.back(), b.report.train_loss.back());
    EXPECT_EQ(a.model.theta, b.model.theta);
}

TEST(Train, DropoutRunsAreSeededAndDeterministic) {
    auto cfg = small_config(kt::CellKind::gated);
    cfg.dropout_rate = 0.5;
    const auto data = learnable_set(20, 15, 8);
    const auto a = kt::train(cfg, 5, 3, data, {});
    const auto b = kt::train(cfg, 5, 3, data, {});
    EXPECT_EQ(a.model.theta, b.model.theta);
}

TEST(Train, ParallelModeIsDeterministic) {
    auto cfg = small_config(kt::CellKind::gated);
    cfg.threads = 2;
    const auto data = learnable_set(20, 15, 9);
    const auto a = kt::train(cfg, 5, 3, data, {});
    const auto b = kt::train(cfg, 5, 3, data, {});
    EXPECT_EQ(a.model.theta, b.model.theta);
}

TEST(Train, ValidationTrajectoryRecorded) {
    auto cfg = small_config(kt::CellKind::gated);
    cfg.validation_every = 1;
    cfg.epochs = 5;
    const auto data = learnable_set(20, 15, 10);
    const auto valid = learnable_set(5, 15, 11);
    const auto trained = kt::train(cfg, 5, 3, data, valid);
    EXPECT_EQ(trained.report.valid_auc.size(), 5u);
    EXPECT_GE(trained.report.best_valid_epoch, 0);
}

TEST(Train, DivergenceAborts) {
    // a non-finite feature value poisons the forward pass; training must
    // stop with the diverged flag instead of running all epochs
    auto cfg = small_config(kt::CellKind::simple);
    cfg.epochs = 5;
    auto data = learnable_set(10, 10, 12);
    data[0].fvalue[0] = std::numeric_limits<double>::quiet_NaN();
    const auto trained = kt::train(cfg, 5, 3, data, {});
    EXPECT_TRUE(trained.report.diverged);
    EXPECT_LT(trained.report.train_loss.size(), 5u);
}

TEST(Train, TruncationSplitsLongSequences) {
    auto cfg = small_config(kt::CellKind::gated);
    cfg.truncate_len = 10;
    const auto data = learnable_set(6, 35, 13);
    const auto trained = kt::train(cfg, 5, 3, data, {});
    EXPECT_FALSE(trained.report.diverged);
    EXPECT_EQ(trained.report.train_loss.size(), 10u);
}

TEST(Checkpoint, RoundTripsBitExactly) {
    const auto data = learnable_set(10, 10, 14);
    auto cfg = small_config(kt::CellKind::gated);
    cfg.epochs = 3;
    const auto trained = kt::train(cfg, 5, 3, data, {});
    std::ostringstream os;
    kt::save_model(trained.model, cfg, os);
    std::istringstream in(os.str());
    const auto [loaded, loaded_cfg] = kt::load_model(in);
    EXPECT_EQ(loaded.theta, trained.model.theta);
    EXPECT_EQ(loaded.cell, trained.model.cell);
    EXPECT_EQ(loaded.input_dim, trained.model.input_dim);
    EXPECT_EQ(loaded_cfg.hidden_size, cfg.hidden_size);
    EXPECT_EQ(loaded_cfg.learning_rate, cfg.learning_rate);
}

}  // namespace
