#pragma once

// Reference models for the comparison tables:
//  - BIRT: Rasch model with standard normal priors on student proficiency
//    theta and item difficulty beta, MAP-fit by coordinate-wise Newton steps.
//    P(correct) = sigmoid(theta - beta); parameters without data stay at the
//    prior mean 0.
//  - PFA: logistic model over per-skill prior success/failure counts plus an
//    item bias, fit by penalized gradient ascent.
//  - Plain BKT predictions threaded through fitted per-skill models.
//  - DKT input encoding: one-hot of the previous (skill, response) pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <vector>

#include "ktrace/bkt.hpp"
#include "ktrace/common.hpp"
#include "ktrace/csv.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/predictor.hpp"

namespace kt {

// ---------------------------------------------------------------- BIRT ----

struct BirtModel {
    std::vector<double> theta;  // per student index; 0 = prior mean (unseen)
    std::vector<double> beta;   // per item index; items are problems, or
    bool item_is_skill = false;  //  skills when the dataset has no problems
};

struct BirtFit {
    BirtModel model;
    std::vector<double> objective;  // log posterior after each sweep
    int sweeps = 0;
};

inline int birt_item(const Dataset& data, const Dataset::Row& r, bool item_is_skill) {
    return item_is_skill ? r.skill : r.problem;
}

inline double predict_birt(const BirtModel& m, int student, int item) {
    const double th = (student >= 0 && student < static_cast<int>(m.theta.size()))
                          ? m.theta[student]
                          : 0.0;
    const double be =
        (item >= 0 && item < static_cast<int>(m.beta.size())) ? m.beta[item] : 0.0;
    return sigmoid(th - be);
}

namespace detail {

struct BirtObs {
    int other;  // item for a student's list, student for an item's list
    std::int8_t r;
};

// log-likelihood of one parameter's observations plus its own prior term;
// `sign` is +1 when the parameter enters as theta, -1 for beta.
inline double birt_local_obj(double value, double sign, const std::vector<BirtObs>& obs,
                             const std::vector<double>& others) {
    double acc = -0.5 * value * value;
    for (const auto& o : obs) {
        const double x = sign > 0 ? value - others[o.other] : others[o.other] - value;
        const double p = std::clamp(sigmoid(x), 1e-12, 1.0 - 1e-12);
        acc += o.r ? std::log(p) : std::log(1.0 - p);
    }
    return acc;
}

// One guarded Newton step on a single coordinate. Returns the accepted update
// magnitude (0 when no step was accepted).
inline double birt_newton_step(double& value, double sign, const std::vector<BirtObs>& obs,
                               const std::vector<double>& others) {
    double grad = -value;
    double curv = 1.0;  // prior contributes theta^2/2
    for (const auto& o : obs) {
        const double x = sign > 0 ? value - others[o.other] : others[o.other] - value;
        const double p = sigmoid(x);
        grad += sign * (static_cast<double>(o.r) - p);
        curv += p * (1.0 - p);
    }
    double step = grad / curv;
    const double before = birt_local_obj(value, sign, obs, others);
    for (int halving = 0; halving < 20; ++halving) {
        const double cand = value + step;
        if (std::isfinite(cand)) {
            const double after = birt_local_obj(cand, sign, obs, others);
            if (std::isfinite(after) && after >= before) {
                value = cand;
                return std::abs(step);
            }
        }
        step *= 0.5;
    }
    return 0.0;
}

}  // namespace detail

// Log posterior of the full model (Bernoulli likelihood plus standard normal
// priors), up to the constant.
inline double birt_objective(const BirtModel& m, const Dataset& data,
                             const std::vector<int>& students) {
    double acc = 0.0;
    for (int si : students) {
        for (const auto& r : data.students[si]) {
            const int item = birt_item(data, r, m.item_is_skill);
            if (item < 0) continue;
            const double p =
                std::clamp(sigmoid(m.theta[si] - m.beta[item]), 1e-12, 1.0 - 1e-12);
            acc += r.correct ? std::log(p) : std::log(1.0 - p);
        }
    }
    for (double th : m.theta) acc -= 0.5 * th * th;
    for (double be : m.beta) acc -= 0.5 * be * be;
    return acc;
}

inline BirtFit fit_birt(const Dataset& data, const std::vector<int>& train_students,
                        int max_sweeps = 100, double tol = 1e-6) {
    if (train_students.empty()) throw Error("fit_birt: no training students");
    BirtFit fit;
    BirtModel& m = fit.model;
    m.item_is_skill = !data.has_problem_info();
    const int n_items = m.item_is_skill ? data.n_skills() : data.n_problems();
    m.theta.assign(data.n_students(), 0.0);
    m.beta.assign(n_items, 0.0);

    std::vector<std::vector<detail::BirtObs>> by_student(data.n_students());
    std::vector<std::vector<detail::BirtObs>> by_item(n_items);
    for (int si : train_students) {
        for (const auto& r : data.students[si]) {
            const int item = birt_item(data, r, m.item_is_skill);
            if (item < 0) continue;
            by_student[si].push_back({item, r.correct});
            by_item[item].push_back({si, r.correct});
        }
    }

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (int si : train_students) {
            if (by_student[si].empty()) continue;
            max_delta = std::max(
                max_delta, detail::birt_newton_step(m.theta[si], +1.0, by_student[si], m.beta));
        }
        for (int item = 0; item < n_items; ++item) {
            if (by_item[item].empty()) continue;
            max_delta = std::max(
                max_delta, detail::birt_newton_step(m.beta[item], -1.0, by_item[item], m.theta));
        }
        fit.objective.push_back(birt_objective(m, data, train_students));
        fit.sweeps = sweep + 1;
        if (max_delta < tol) break;
    }
    return fit;
}

// ----------------------------------------------------------------- PFA ----

struct PfaModel {
    std::vector<double> beta;   // per item (problems, or skills when absent)
    std::vector<double> gamma;  // per skill: prior-success weight
    std::vector<double> rho;    // per skill: prior-failure weight
    bool item_is_skill = false;
};

struct PfaFit {
    PfaModel model;
    std::vector<double> objective;  // penalized mean log-likelihood per iteration
    int iterations = 0;
};

inline double predict_pfa(const PfaModel& m, int item, int skill, double s_cnt, double f_cnt) {
    double z = m.gamma[skill] * s_cnt + m.rho[skill] * f_cnt;
    if (item >= 0 && item < static_cast<int>(m.beta.size())) z += m.beta[item];
    return sigmoid(z);
}

namespace detail {

struct PfaRecord {
    int item;
    int skill;
    double s_cnt;
    double f_cnt;
    std::int8_t r;
};

// Per-record prior success/failure counts on the record's skill, counted
// over the student's earlier attempts only.
inline std::vector<PfaRecord> pfa_records(const Dataset& data, const std::vector<int>& students,
                                          bool item_is_skill) {
    std::vector<PfaRecord> out;
    std::vector<double> succ(data.n_skills(), 0.0), fail(data.n_skills(), 0.0);
    std::vector<int> touched;
    for (int si : students) {
        touched.clear();
        for (const auto& r : data.students[si]) {
            PfaRecord rec;
            rec.item = item_is_skill ? r.skill : r.problem;
            rec.skill = r.skill;
            rec.s_cnt = succ[r.skill];
            rec.f_cnt = fail[r.skill];
            rec.r = r.correct;
            out.push_back(rec);
            if (succ[r.skill] == 0.0 && fail[r.skill] == 0.0) touched.push_back(r.skill);
            (r.correct ? succ : fail)[r.skill] += 1.0;
        }
        for (int sk : touched) {
            succ[sk] = 0.0;
            fail[sk] = 0.0;
        }
    }
    return out;
}

inline double pfa_objective(const PfaModel& m, const std::vector<PfaRecord>& recs,
                            double lambda) {
    double ll = 0.0;
    for (const auto& rec : recs) {
        const double p =
            std::clamp(predict_pfa(m, rec.item, rec.skill, rec.s_cnt, rec.f_cnt), 1e-12,
                       1.0 - 1e-12);
        ll += rec.r ? std::log(p) : std::log(1.0 - p);
    }
    ll /= static_cast<double>(recs.size());
    double penalty = 0.0;
    for (double b : m.beta) penalty += b * b;
    for (double g : m.gamma) penalty += g * g;
    for (double r : m.rho) penalty += r * r;
    return ll - 0.5 * lambda * penalty;
}

}  // namespace detail

// Gradient ascent on the L2-penalized mean log-likelihood with an adaptive
// step: starts at `step`, doubles after an accepted move, halves (up to 30
// times) when a move would lower the objective. A non-finite objective
// restarts once from zero with a tenth of the step size.
inline PfaFit fit_pfa(const Dataset& data, const std::vector<int>& train_students,
                      double lambda = 0.01, double step = 0.1, double grad_tol = 1e-5,
                      int max_iter = 500) {
    if (train_students.empty()) throw Error("fit_pfa: no training students");
    PfaFit fit;
    PfaModel& m = fit.model;
    m.item_is_skill = !data.has_problem_info();
    const int n_items = m.item_is_skill ? data.n_skills() : data.n_problems();
    const int n_skills = data.n_skills();

    const auto recs = detail::pfa_records(data, train_students, m.item_is_skill);
    if (recs.empty()) throw Error("fit_pfa: no training records");
    const double inv_n = 1.0 / static_cast<double>(recs.size());

    for (int attempt = 0; attempt < 2; ++attempt) {
        m.beta.assign(n_items, 0.0);
        m.gamma.assign(n_skills, 0.0);
        m.rho.assign(n_skills, 0.0);
        fit.objective.clear();
        fit.iterations = 0;
        bool diverged = false;

        std::vector<double> gb(n_items), gg(n_skills), gr(n_skills);
        double obj = detail::pfa_objective(m, recs, lambda);
        double eta = step;
        for (int iter = 0; iter < max_iter; ++iter) {
            std::fill(gb.begin(), gb.end(), 0.0);
            std::fill(gg.begin(), gg.end(), 0.0);
            std::fill(gr.begin(), gr.end(), 0.0);
            for (const auto& rec : recs) {
                const double e =
                    static_cast<double>(rec.r) -
                    predict_pfa(m, rec.item, rec.skill, rec.s_cnt, rec.f_cnt);
                if (rec.item >= 0) gb[rec.item] += e * inv_n;
                gg[rec.skill] += e * rec.s_cnt * inv_n;
                gr[rec.skill] += e * rec.f_cnt * inv_n;
            }
            double norm_sq = 0.0;
            for (int i = 0; i < n_items; ++i) {
                gb[i] -= lambda * m.beta[i];
                norm_sq += gb[i] * gb[i];
            }
            for (int k = 0; k < n_skills; ++k) {
                gg[k] -= lambda * m.gamma[k];
                gr[k] -= lambda * m.rho[k];
                norm_sq += gg[k] * gg[k] + gr[k] * gr[k];
            }
            fit.objective.push_back(obj);
            fit.iterations = iter + 1;
            if (std::sqrt(norm_sq) < grad_tol) break;

            const PfaModel saved = m;
            bool accepted = false;
            for (int halving = 0; halving < 30; ++halving) {
                for (int i = 0; i < n_items; ++i) m.beta[i] = saved.beta[i] + eta * gb[i];
                for (int k = 0; k < n_skills; ++k) {
                    m.gamma[k] = saved.gamma[k] + eta * gg[k];
                    m.rho[k] = saved.rho[k] + eta * gr[k];
                }
                const double cand = detail::pfa_objective(m, recs, lambda);
                if (!std::isfinite(cand)) {
                    diverged = true;
                    break;
                }
                if (cand >= obj) {
                    obj = cand;
                    accepted = true;
                    eta = std::min(eta * 2.0, step * 1024.0);
                    break;
                }
                eta *= 0.5;
            }
            if (diverged) break;
            if (!accepted) {
                m = saved;
                break;  // no ascent direction at this scale
            }
        }
        if (!diverged) return fit;
        step *= 0.1;  // restart once with a smaller step
    }
    throw Error("fit_pfa: diverged after restart");
}

// Prior success/failure counts for arbitrary students (used at prediction
// time; counts accumulate over the student's own earlier attempts).
inline std::vector<detail::PfaRecord> pfa_features(const Dataset& data,
                                                   const std::vector<int>& students,
                                                   const PfaModel& m) {
    return detail::pfa_records(data, students, m.item_is_skill);
}

// ------------------------------------------------------- BKT baseline ----

// Per-record correctness predictions from fitted per-skill BKT models,
// threading each student's own attempts through the skill's recurrence.
inline std::vector<std::vector<double>> predict_bkt_baseline(
    const Dataset& data, const std::vector<BktParams>& by_skill) {
    return trace_dataset(data, by_skill).predicted;
}

// ------------------------------------------------------------- DKT input --

// One-hot encoding of the previous interaction in 2M dimensions: the first M
// slots are incorrect responses, the next M correct ones. The first step has
// no history and gets a zero vector.
inline std::vector<EncodedSeq> build_dkt_input(const Dataset& data,
                                               const std::vector<int>& students) {
    const int m = data.n_skills();
    std::vector<EncodedSeq> out;
    out.reserve(students.size());
    for (int si : students) {
        EncodedSeq seq;
        const auto& recs = data.students[si];
        std::vector<std::pair<int, double>> feats;
        for (std::size_t t = 0; t < recs.size(); ++t) {
            feats.clear();
            if (t > 0) {
                const auto& prev = recs[t - 1];
                feats.emplace_back(prev.skill + (prev.correct ? m : 0), 1.0);
            }
            seq.push_step(feats, recs[t].skill, recs[t].correct);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// --------------------------------------------------------- serialization --

inline void save_birt(const BirtFit& fit, const Dataset& data, std::ostream& os) {
    csv::write_row(os, {"kind", "id", "value"});
    for (int si = 0; si < data.n_students(); ++si) {
        csv::write_row(os, {"theta", data.student_ids[si], format_g17(fit.model.theta[si])});
    }
    const auto& ids = fit.model.item_is_skill ? data.skill_ids : data.problem_ids;
    for (std::size_t i = 0; i < fit.model.beta.size(); ++i) {
        csv::write_row(os, {"beta", ids[i], format_g17(fit.model.beta[i])});
    }
}

inline void save_pfa(const PfaFit& fit, const Dataset& data, std::ostream& os) {
    csv::write_row(os, {"kind", "id", "value"});
    const auto& item_ids = fit.model.item_is_skill ? data.skill_ids : data.problem_ids;
    for (std::size_t i = 0; i < fit.model.beta.size(); ++i) {
        csv::write_row(os, {"beta", item_ids[i], format_g17(fit.model.beta[i])});
    }
    for (int k = 0; k < data.n_skills(); ++k) {
        csv::write_row(os, {"gamma", data.skill_ids[k], format_g17(fit.model.gamma[k])});
        csv::write_row(os, {"rho", data.skill_ids[k], format_g17(fit.model.rho[k])});
    }
}

}  // namespace kt
