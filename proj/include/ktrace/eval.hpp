#pragma once

// Student-level cross-validation harness and the feature-ablation runner.
// Per fold, every fitted artifact (BKT parameters, ability centroids,
// difficulty table, trained predictor) is a function of the training
// students only; test students are only ever predicted.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ktrace/baselines.hpp"
#include "ktrace/bkt.hpp"
#include "ktrace/common.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/difficulty.hpp"
#include "ktrace/features.hpp"
#include "ktrace/metrics.hpp"
#include "ktrace/predictor.hpp"
#include "ktrace/profile.hpp"

namespace kt {

enum class ModelKind { bkt_lstm, bkt, birt, pfa, dkt };

inline std::string model_name(ModelKind k) {
    switch (k) {
        case ModelKind::bkt_lstm: return "bkt-lstm";
        case ModelKind::bkt: return "bkt";
        case ModelKind::birt: return "birt";
        case ModelKind::pfa: return "pfa";
        case ModelKind::dkt: return "dkt";
    }
    throw Error("model_name: bad kind");
}

inline ModelKind model_from_name(const std::string& s) {
    if (s == "bkt-lstm") return ModelKind::bkt_lstm;
    if (s == "bkt") return ModelKind::bkt;
    if (s == "birt") return ModelKind::birt;
    if (s == "pfa") return ModelKind::pfa;
    if (s == "dkt") return ModelKind::dkt;
    throw Error("unknown model '" + s + "' (expected bkt-lstm, bkt, birt, pfa or dkt)");
}

struct CvConfig {
    int folds = 5;
    std::uint64_t seed = 42;
    int window = 20;
    int clusters = 7;
    GridSpec grid{};
    BktParams fallback{0.5, 0.1, 0.2, 0.1};
    int min_support = 4;
    RnnConfig rnn{};
    FeatureMask mask{};
};

struct FoldMetrics {
    std::optional<double> auc;
    std::optional<double> rmse;
    std::optional<double> r2;
    std::size_t n = 0;
};

struct EvalReport {
    std::string model;
    std::vector<FoldMetrics> folds;
    FoldMetrics mean;
    // per-skill averaged metrics (reported in addition for the BKT baseline)
    std::vector<FoldMetrics> folds_skill_avg;
    FoldMetrics mean_skill_avg;
};

struct FoldArtifacts {
    BktFit bkt;
    AbilityModel ability;
    DifficultyTable difficulty;
};

// Fits all feature models on the training students of one fold.
inline FoldArtifacts fit_fold(const Dataset& data, const std::vector<int>& train_students,
                              const CvConfig& cfg, std::uint64_t fold_seed) {
    FoldArtifacts art;
    art.bkt = fit_skills(data, train_students, cfg.grid, cfg.fallback);
    const auto vectors = training_vectors(data, train_students, cfg.window);
    art.ability =
        fit_kmeans(vectors, cfg.clusters, mix_seed(fold_seed, 0xC1u), 100).model;
    art.difficulty = compute_difficulty(data, train_students, cfg.min_support);
    return art;
}

namespace detail {

struct FoldPrediction {
    std::vector<PredPair> pooled;
    std::vector<int> skills;  // aligned with pooled; for per-skill averaging
};

inline FoldMetrics metrics_of(std::span<const PredPair> preds) {
    FoldMetrics fm;
    fm.n = preds.size();
    if (preds.empty()) return fm;
    fm.auc = auc(preds);
    fm.rmse = rmse(preds);
    fm.r2 = r_squared(preds);
    return fm;
}

// Mean of each metric over the skills where it is defined.
inline FoldMetrics skill_avg_metrics(const FoldPrediction& pred, int n_skills) {
    std::vector<std::vector<PredPair>> by_skill(n_skills);
    for (std::size_t i = 0; i < pred.pooled.size(); ++i) {
        by_skill[pred.skills[i]].push_back(pred.pooled[i]);
    }
    double auc_sum = 0.0, rmse_sum = 0.0, r2_sum = 0.0;
    std::size_t auc_n = 0, rmse_n = 0, r2_n = 0, total = 0;
    for (const auto& preds : by_skill) {
        if (preds.empty()) continue;
        total += preds.size();
        if (const auto a = auc(preds)) {
            auc_sum += *a;
            ++auc_n;
        }
        rmse_sum += rmse(preds);
        ++rmse_n;
        if (const auto r = r_squared(preds)) {
            r2_sum += *r;
            ++r2_n;
        }
    }
    FoldMetrics fm;
    fm.n = total;
    if (auc_n) fm.auc = auc_sum / static_cast<double>(auc_n);
    if (rmse_n) fm.rmse = rmse_sum / static_cast<double>(rmse_n);
    if (r2_n) fm.r2 = r2_sum / static_cast<double>(r2_n);
    return fm;
}

inline FoldMetrics mean_over_folds(const std::vector<FoldMetrics>& folds) {
    FoldMetrics mean;
    double a = 0, r = 0, q = 0;
    std::size_t an = 0, rn = 0, qn = 0;
    for (const auto& f : folds) {
        mean.n += f.n;
        if (f.auc) {
            a += *f.auc;
            ++an;
        }
        if (f.rmse) {
            r += *f.rmse;
            ++rn;
        }
        if (f.r2) {
            q += *f.r2;
            ++qn;
        }
    }
    if (an) mean.auc = a / static_cast<double>(an);
    if (rn) mean.rmse = r / static_cast<double>(rn);
    if (qn) mean.r2 = q / static_cast<double>(qn);
    return mean;
}

inline FoldPrediction predict_fold_bkt_lstm(const Dataset& data, const FoldSplit& fold,
                                            const CvConfig& cfg, const FoldArtifacts& art,
                                            std::uint64_t fold_seed) {
    const auto mastery = mastery_features(data, art.bkt);
    const auto labels = profile_labels(data, art.ability, cfg.window);
    const auto train_feats =
        build_sequences(data, fold.train_students, mastery, labels, art.difficulty);
    const auto test_feats =
        build_sequences(data, fold.test_students, mastery, labels, art.difficulty);

    EncodingSpec enc;
    enc.n_skills = data.n_skills();
    enc.ability_slots = cfg.clusters + 1;
    enc.mask = cfg.mask;

    auto encode_all = [&](const std::vector<FeatureSequence>& seqs) {
        std::vector<EncodedSeq> out;
        out.reserve(seqs.size());
        std::vector<std::pair<int, double>> sparse;
        for (const auto& fs : seqs) {
            EncodedSeq es;
            for (const auto& step : fs.steps) {
                detail::encode_sparse(step, enc, sparse);
                es.push_step(sparse, step.skill, step.target);
            }
            out.push_back(std::move(es));
        }
        return out;
    };
    const auto train_enc = encode_all(train_feats);
    const auto test_enc = encode_all(test_feats);

    RnnConfig rnn = cfg.rnn;
    rnn.seed = mix_seed(fold_seed, 0x11A);
    const auto trained = train(rnn, enc.dim(), data.n_skills(), train_enc, test_enc);

    FoldPrediction out;
    for (const auto& seq : test_enc) {
        const auto p = predict(trained.model, seq);
        for (int t = 0; t < seq.steps(); ++t) {
            out.pooled.push_back({p[t], seq.target[t]});
            out.skills.push_back(seq.skill[t]);
        }
    }
    return out;
}

inline FoldPrediction predict_fold_bkt(const Dataset& data, const FoldSplit& fold,
                                       const FoldArtifacts& art) {
    const auto preds = predict_bkt_baseline(data, params_table(art.bkt));
    FoldPrediction out;
    for (int si : fold.test_students) {
        const auto& recs = data.students[si];
        for (std::size_t i = 0; i < recs.size(); ++i) {
            out.pooled.push_back({preds[si][i], recs[i].correct});
            out.skills.push_back(recs[i].skill);
        }
    }
    return out;
}

inline FoldPrediction predict_fold_birt(const Dataset& data, const FoldSplit& fold) {
    const auto fit = fit_birt(data, fold.train_students);
    FoldPrediction out;
    for (int si : fold.test_students) {
        for (const auto& r : data.students[si]) {
            const int item = birt_item(data, r, fit.model.item_is_skill);
            out.pooled.push_back({predict_birt(fit.model, si, item), r.correct});
            out.skills.push_back(r.skill);
        }
    }
    return out;
}

inline FoldPrediction predict_fold_pfa(const Dataset& data, const FoldSplit& fold) {
    const auto fit = fit_pfa(data, fold.train_students);
    FoldPrediction out;
    const auto recs = pfa_features(data, fold.test_students, fit.model);
    std::size_t idx = 0;
    for (int si : fold.test_students) {
        for (const auto& r : data.students[si]) {
            const auto& pr = recs[idx++];
            out.pooled.push_back(
                {predict_pfa(fit.model, pr.item, pr.skill, pr.s_cnt, pr.f_cnt), r.correct});
            out.skills.push_back(r.skill);
        }
    }
    return out;
}

inline FoldPrediction predict_fold_dkt(const Dataset& data, const FoldSplit& fold,
                                       const CvConfig& cfg, std::uint64_t fold_seed) {
    const auto train_enc = build_dkt_input(data, fold.train_students);
    const auto test_enc = build_dkt_input(data, fold.test_students);
    RnnConfig rnn = cfg.rnn;
    rnn.seed = mix_seed(fold_seed, 0x11A);
    const auto trained = train(rnn, 2 * data.n_skills(), data.n_skills(), train_enc, test_enc);
    FoldPrediction out;
    for (const auto& seq : test_enc) {
        const auto p = predict(trained.model, seq);
        for (int t = 0; t < seq.steps(); ++t) {
            out.pooled.push_back({p[t], seq.target[t]});
            out.skills.push_back(seq.skill[t]);
        }
    }
    return out;
}

}  // namespace detail

// Called once per fold with the fitted artifacts (bkt-lstm runs only).
using FoldSink = std::function<void(int fold, const FoldArtifacts&)>;

inline EvalReport cross_validate(const Dataset& data, ModelKind kind, const CvConfig& cfg,
                                 const FoldSink& sink = {}) {
    const auto folds = split_folds(data, cfg.folds, cfg.seed);
    EvalReport report;
    report.model = model_name(kind);

    for (const auto& fold : folds) {
        const std::uint64_t fold_seed = mix_seed(cfg.seed, 0xF01D + fold.fold_id);
        detail::FoldPrediction pred;
        switch (kind) {
            case ModelKind::bkt_lstm: {
                const auto art = fit_fold(data, fold.train_students, cfg, fold_seed);
                if (sink) sink(fold.fold_id, art);
                pred = detail::predict_fold_bkt_lstm(data, fold, cfg, art, fold_seed);
                break;
            }
            case ModelKind::bkt: {
                FoldArtifacts art;
                art.bkt = fit_skills(data, fold.train_students, cfg.grid, cfg.fallback);
                if (sink) sink(fold.fold_id, art);
                pred = detail::predict_fold_bkt(data, fold, art);
                break;
            }
            case ModelKind::birt:
                pred = detail::predict_fold_birt(data, fold);
                break;
            case ModelKind::pfa:
                pred = detail::predict_fold_pfa(data, fold);
                break;
            case ModelKind::dkt:
                pred = detail::predict_fold_dkt(data, fold, cfg, fold_seed);
                break;
        }
        report.folds.push_back(detail::metrics_of(pred.pooled));
        if (kind == ModelKind::bkt) {
            report.folds_skill_avg.push_back(detail::skill_avg_metrics(pred, data.n_skills()));
        }
    }
    report.mean = detail::mean_over_folds(report.folds);
    if (!report.folds_skill_avg.empty()) {
        report.mean_skill_avg = detail::mean_over_folds(report.folds_skill_avg);
    }
    return report;
}

// Runs the four feature-ablation variants with identical folds, seeds and
// hyperparameters: 1 = mastery, 2 = mastery+ability, 3 = mastery+difficulty,
// 4 = all three.
inline std::vector<EvalReport> ablate(const Dataset& data, const CvConfig& base) {
    const FeatureMask masks[4] = {
        {false, false, true},
        {true, false, true},
        {false, true, true},
        {true, true, true},
    };
    std::vector<EvalReport> reports;
    for (int v = 0; v < 4; ++v) {
        CvConfig cfg = base;
        cfg.mask = masks[v];
        EvalReport rep = cross_validate(data, ModelKind::bkt_lstm, cfg);
        rep.model = "bkt-lstm-" + std::to_string(v + 1);
        reports.push_back(std::move(rep));
    }
    return reports;
}

}  // namespace kt
