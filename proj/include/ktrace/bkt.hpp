#pragma once

// Per-skill Bayesian Knowledge Tracing: a two-state HMM with prior L0,
// learning transition T, guess G and slip S. Provides the posterior update,
// learning step, correctness prediction, brute-force grid fitting by
// Bernoulli log-likelihood, and mastery traces over interaction logs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <vector>

#include "ktrace/common.hpp"
#include "ktrace/csv.hpp"
#include "ktrace/dataset.hpp"

namespace kt {

struct BktParams {
    double l0 = 0.0;  // prior probability of mastery
    double t = 0.0;   // transition (learning) probability
    double g = 0.0;   // guess probability
    double s = 0.0;   // slip probability
};

// Search grid for the brute-force fit. Guess and slip axes are capped to
// keep fitted models out of the degenerate regime; caps are configurable.
struct GridSpec {
    double lo = 0.05;
    double hi = 0.95;
    double step = 0.05;
    double g_max = 0.30;
    double s_max = 0.30;

    std::vector<double> axis(double cap) const {
        std::vector<double> v;
        const double top = std::min(hi, cap) + 1e-12;
        for (int i = 0;; ++i) {
            const double x = lo + i * step;
            if (x > top) break;
            v.push_back(x);
        }
        return v;
    }
};

struct SkillModel {
    int skill = -1;
    BktParams params;
    double train_log_likelihood = 0.0;
    bool fallback = false;  // no training data; params are the configured default
};

// P(mastered | outcome). Posterior of the hidden state given one response:
//   correct:   L(1-S) / (L(1-S) + (1-L)G)
//   incorrect: L·S    / (L·S    + (1-L)(1-G))
// A zero denominator (probability-zero evidence) leaves the prior unchanged
// and raises the degeneracy flag.
inline double posterior_update(const BktParams& p, double prior, int outcome,
                               bool* degenerate = nullptr) {
    const double num = outcome ? prior * (1.0 - p.s) : prior * p.s;
    const double den =
        outcome ? num + (1.0 - prior) * p.g : num + (1.0 - prior) * (1.0 - p.g);
    if (den <= 0.0) {
        if (degenerate) *degenerate = true;
        return prior;
    }
    return num / den;
}

// Mastery after the learning opportunity: posterior + (1-posterior)·T.
inline double learn_step(const BktParams& p, double posterior) {
    return posterior + (1.0 - posterior) * p.t;
}

// Probability of a correct response given current mastery: L(1-S) + (1-L)G.
inline double predict_correct(const BktParams& p, double prior) {
    return prior * (1.0 - p.s) + (1.0 - prior) * p.g;
}

struct SequenceTrace {
    std::vector<double> masteries;  // belief entering each attempt; [0] == l0
    std::vector<double> predicted;  // correctness probability at each attempt
    std::size_t degeneracies = 0;
};

inline SequenceTrace run_sequence(const BktParams& p, const std::vector<std::int8_t>& outcomes) {
    SequenceTrace tr;
    tr.masteries.reserve(outcomes.size());
    tr.predicted.reserve(outcomes.size());
    double belief = p.l0;
    for (std::int8_t r : outcomes) {
        tr.masteries.push_back(belief);
        tr.predicted.push_back(predict_correct(p, belief));
        bool degenerate = false;
        belief = learn_step(p, posterior_update(p, belief, r, &degenerate));
        if (degenerate) ++tr.degeneracies;
    }
    return tr;
}

namespace detail {

constexpr double kProbFloor = 1e-9;

// Evaluates the total log-likelihood of the observed outcomes under the
// step-ahead correctness predictions, for a block of parameter combinations
// at once. Lane blocking keeps the per-step belief recurrences of several
// grid points in flight, which hides the division latency of the posterior
// update. Probabilities are floored before entering the log, and logs are
// taken over bounded-length chunks of the running product.
template <int L>
inline void bkt_loglik_block(const std::vector<std::vector<std::int8_t>>& sequences, int nl,
                             const double* l0, const double* t, const double* g, const double* s,
                             double* ll) {
    double a[L], omt[L], oms[L];
    for (int i = 0; i < nl; ++i) {
        a[i] = 1.0 - s[i] - g[i];
        omt[i] = 1.0 - t[i];
        oms[i] = 1.0 - s[i];
        ll[i] = 0.0;
    }
    constexpr int kChunk = 64;
    constexpr double kTiny = 1e-300;
    double bel[L], prod[L];
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        for (int i = 0; i < nl; ++i) {
            bel[i] = l0[i];
            prod[i] = 1.0;
        }
        int chunk = 0;
        for (std::int8_t r : seq) {
            if (r) {
                for (int i = 0; i < nl; ++i) {
                    double p = g[i] + bel[i] * a[i];
                    p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
                    prod[i] *= p;
                    const double post = std::min(bel[i] * oms[i] / p, 1.0);
                    bel[i] = t[i] + post * omt[i];
                }
            } else {
                for (int i = 0; i < nl; ++i) {
                    double p = g[i] + bel[i] * a[i];
                    p = std::clamp(p, kProbFloor, 1.0 - kProbFloor);
                    prod[i] *= 1.0 - p;
                    const double post = std::min(bel[i] * s[i] / (1.0 - p), 1.0);
                    bel[i] = t[i] + post * omt[i];
                }
            }
            if (++chunk == kChunk) {
                for (int i = 0; i < nl; ++i) {
                    ll[i] += std::log(std::max(prod[i], kTiny));
                    prod[i] = 1.0;
                }
                chunk = 0;
            }
        }
        if (chunk) {
            for (int i = 0; i < nl; ++i) ll[i] += std::log(std::max(prod[i], kTiny));
        }
    }
}

}  // namespace detail

// Exhaustive grid search maximizing the Bernoulli log-likelihood of the
// step-ahead predictions over all sequences. Ties broken by smallest
// (g, s, t, l0), which is the enumeration order below.
inline SkillModel fit_skill(const std::vector<std::vector<std::int8_t>>& sequences,
                            const GridSpec& grid = {}) {
    bool any = false;
    for (const auto& s : sequences) {
        if (!s.empty()) any = true;
    }
    if (!any) throw Error("fit_skill: no non-empty sequences");

    const std::vector<double> l0s = grid.axis(1.0);
    const std::vector<double> ts = grid.axis(1.0);
    const std::vector<double> gs = grid.axis(grid.g_max);
    const std::vector<double> ss = grid.axis(grid.s_max);
    if (l0s.empty() || gs.empty() || ss.empty()) throw Error("fit_skill: empty grid");

    std::vector<BktParams> combos;
    combos.reserve(l0s.size() * ts.size() * gs.size() * ss.size());
    for (double g : gs) {
        for (double s : ss) {
            for (double t : ts) {
                for (double l0 : l0s) combos.push_back({l0, t, g, s});
            }
        }
    }

    constexpr int L = 16;
    double bl0[L], bt[L], bg[L], bs[L], ll[L];
    SkillModel best;
    best.train_log_likelihood = -std::numeric_limits<double>::infinity();
    for (std::size_t c0 = 0; c0 < combos.size(); c0 += L) {
        const int nl = static_cast<int>(std::min<std::size_t>(L, combos.size() - c0));
        for (int i = 0; i < nl; ++i) {
            const BktParams& c = combos[c0 + i];
            bl0[i] = c.l0;
            bt[i] = c.t;
            bg[i] = c.g;
            bs[i] = c.s;
        }
        detail::bkt_loglik_block<L>(sequences, nl, bl0, bt, bg, bs, ll);
        for (int i = 0; i < nl; ++i) {
            if (ll[i] > best.train_log_likelihood) {
                best.train_log_likelihood = ll[i];
                best.params = combos[c0 + i];
            }
        }
    }
    return best;
}

struct BktFit {
    std::vector<SkillModel> models;    // indexed by skill; fallbacks filled in
    std::vector<int> fallback_skills;  // skills absent from the training students
};

inline std::vector<BktParams> params_table(const BktFit& fit) {
    std::vector<BktParams> table(fit.models.size());
    for (std::size_t i = 0; i < fit.models.size(); ++i) table[i] = fit.models[i].params;
    return table;
}

// Fits every skill independently on the training students' per-skill outcome
// sequences. Skills never seen in training get the fallback parameters.
inline BktFit fit_skills(const Dataset& data, const std::vector<int>& train_students,
                         const GridSpec& grid = {},
                         const BktParams& fallback = {0.5, 0.1, 0.2, 0.1}) {
    const int n_skills = data.n_skills();
    std::vector<std::vector<std::vector<std::int8_t>>> seqs(n_skills);
    std::vector<int> idx(n_skills, -1);
    for (int si : train_students) {
        // this student's outcomes per skill, in order
        std::vector<std::vector<std::int8_t>> tmp;
        std::vector<int> touched;
        for (const auto& r : data.students[si]) {
            if (idx[r.skill] < 0) {
                idx[r.skill] = static_cast<int>(tmp.size());
                tmp.emplace_back();
                touched.push_back(r.skill);
            }
            tmp[idx[r.skill]].push_back(r.correct);
        }
        for (int sk : touched) {
            seqs[sk].push_back(std::move(tmp[idx[sk]]));
            idx[sk] = -1;
        }
    }

    BktFit fit;
    fit.models.resize(n_skills);
    for (int sk = 0; sk < n_skills; ++sk) {
        if (seqs[sk].empty()) {
            fit.models[sk] = {sk, fallback, 0.0, true};
            fit.fallback_skills.push_back(sk);
        } else {
            fit.models[sk] = fit_skill(seqs[sk], grid);
            fit.models[sk].skill = sk;
        }
    }
    return fit;
}

struct DatasetTrace {
    // per student, per record: belief entering the attempt / predicted P(correct)
    std::vector<std::vector<double>> mastery;
    std::vector<std::vector<double>> predicted;
};

// Threads each student's attempts through the per-skill models. A skill's
// belief advances only on that skill's own attempts; interleaved skills do
// not interact.
inline DatasetTrace trace_dataset(const Dataset& data, const std::vector<BktParams>& by_skill) {
    const int n_skills = data.n_skills();
    DatasetTrace out;
    out.mastery.resize(data.n_students());
    out.predicted.resize(data.n_students());
    std::vector<double> belief(n_skills, 0.0);
    std::vector<char> seen(n_skills, 0);
    std::vector<int> touched;
    for (int si = 0; si < data.n_students(); ++si) {
        touched.clear();
        auto& mast = out.mastery[si];
        auto& pred = out.predicted[si];
        mast.reserve(data.students[si].size());
        pred.reserve(data.students[si].size());
        for (const auto& r : data.students[si]) {
            const BktParams& p = by_skill[r.skill];
            if (!seen[r.skill]) {
                seen[r.skill] = 1;
                belief[r.skill] = p.l0;
                touched.push_back(r.skill);
            }
            const double b = belief[r.skill];
            mast.push_back(b);
            pred.push_back(predict_correct(p, b));
            belief[r.skill] = learn_step(p, posterior_update(p, b, r.correct));
        }
        for (int sk : touched) seen[sk] = 0;
    }
    return out;
}

// Mastery feature per record: P(skill mastered) entering the attempt.
inline std::vector<std::vector<double>> mastery_features(const Dataset& data,
                                                         const BktFit& fit) {
    return trace_dataset(data, params_table(fit)).mastery;
}

inline void save_models(const std::vector<SkillModel>& models, const Dataset& data,
                        std::ostream& os) {
    csv::write_row(os, {"skill_id", "l0", "t", "g", "s", "log_likelihood", "fallback"});
    for (const auto& m : models) {
        csv::write_row(os, {data.skill_ids[m.skill], format_g17(m.params.l0),
                            format_g17(m.params.t), format_g17(m.params.g),
                            format_g17(m.params.s), format_g17(m.train_log_likelihood),
                            m.fallback ? "1" : "0"});
    }
}

inline std::vector<SkillModel> load_models(std::istream& in, const Dataset& data) {
    csv::Reader reader(in);
    const int c_id = reader.column("skill_id");
    const int c_l0 = reader.column("l0");
    const int c_t = reader.column("t");
    const int c_g = reader.column("g");
    const int c_s = reader.column("s");
    const int c_ll = reader.column("log_likelihood");
    const int c_fb = reader.column("fallback");
    if (c_id < 0 || c_l0 < 0 || c_t < 0 || c_g < 0 || c_s < 0 || c_ll < 0) {
        throw Error("load_models: malformed header");
    }
    std::unordered_map<std::string, int> skill_index;
    for (int i = 0; i < data.n_skills(); ++i) skill_index[data.skill_ids[i]] = i;

    std::vector<SkillModel> models;
    std::vector<std::string> row;
    while (reader.next(row)) {
        auto it = skill_index.find(row[c_id]);
        if (it == skill_index.end()) throw Error("load_models: unknown skill '" + row[c_id] + "'");
        SkillModel m;
        m.skill = it->second;
        m.params = {std::strtod(row[c_l0].c_str(), nullptr), std::strtod(row[c_t].c_str(), nullptr),
                    std::strtod(row[c_g].c_str(), nullptr), std::strtod(row[c_s].c_str(), nullptr)};
        m.train_log_likelihood = std::strtod(row[c_ll].c_str(), nullptr);
        m.fallback = c_fb >= 0 && row[c_fb] == "1";
        models.push_back(m);
    }
    std::sort(models.begin(), models.end(),
              [](const SkillModel& a, const SkillModel& b) { return a.skill < b.skill; });
    return models;
}

}  // namespace kt
