#pragma once

// Recurrent sequence predictor over encoded feature steps, one sigmoid
// output per skill. Two cells: a gated (LSTM) cell and a simple tanh
// recurrence
//   h_t = tanh(Wx x_t + Wh h_{t-1} + b_h),  y_t = sigmoid(Wy h_t + b_y).
// Trained with mini-batch SGD on the cross-entropy of the target skill's
// output, exact gradients via backpropagation through time. Dropout, when
// enabled, applies to h_t only where it feeds the output layer, never on
// the recurrent path. Everything is deterministic given the seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ktrace/common.hpp"
#include "ktrace/metrics.hpp"

namespace kt {

enum class CellKind { gated, simple };

inline std::string cell_name(CellKind c) { return c == CellKind::gated ? "gated" : "simple"; }

inline CellKind cell_from_name(const std::string& s) {
    if (s == "gated") return CellKind::gated;
    if (s == "simple") return CellKind::simple;
    throw Error("unknown cell '" + s + "' (expected gated or simple)");
}

struct RnnConfig {
    int hidden_size = 200;
    double learning_rate = 0.01;
    int batch_size = 32;
    int epochs = 100;
    double dropout_rate = 0.5;
    CellKind cell = CellKind::gated;
    std::uint64_t seed = 42;
    double max_grad_norm = 5.0;
    int truncate_len = 500;    // long sequences are split into chunks of this length
    int threads = 1;           // >1: parallel forward/backward within a batch
    int validation_every = 1;  // 0 disables validation metrics
};

// Sparse step sequence: feature (index, value) pairs per step, the target
// skill and outcome. skill < 0 marks padding: the step runs through the
// recurrence but is masked from the loss.
struct EncodedSeq {
    std::vector<std::int32_t> offsets{0};
    std::vector<std::int32_t> findex;
    std::vector<double> fvalue;
    std::vector<std::int32_t> skill;
    std::vector<std::int8_t> target;

    int steps() const { return static_cast<int>(skill.size()); }

    void push_step(std::span<const std::pair<int, double>> feats, int sk, int tgt) {
        for (const auto& [i, v] : feats) {
            findex.push_back(i);
            fvalue.push_back(v);
        }
        offsets.push_back(static_cast<std::int32_t>(findex.size()));
        skill.push_back(sk);
        target.push_back(static_cast<std::int8_t>(tgt));
    }
};

namespace gate {
constexpr int kIn = 0;
constexpr int kForget = 1;
constexpr int kCand = 2;
constexpr int kOut = 3;
}  // namespace gate

struct RnnModel {
    CellKind cell = CellKind::gated;
    int input_dim = 0;
    int hidden = 0;
    int n_skills = 0;
    std::vector<double> theta;

    int n_gates() const { return cell == CellKind::gated ? 4 : 1; }
    // input weights are stored input-major ([input_dim x hidden]) so sparse
    // feature columns are contiguous; recurrent and output weights row-major
    std::size_t wx_off(int g) const { return static_cast<std::size_t>(g) * hidden * input_dim; }
    std::size_t wh_off(int g) const {
        return static_cast<std::size_t>(n_gates()) * hidden * input_dim +
               static_cast<std::size_t>(g) * hidden * hidden;
    }
    std::size_t b_off(int g) const {
        return static_cast<std::size_t>(n_gates()) * hidden * (input_dim + hidden) +
               static_cast<std::size_t>(g) * hidden;
    }
    std::size_t wy_off() const {
        return static_cast<std::size_t>(n_gates()) * hidden * (input_dim + hidden + 1);
    }
    std::size_t by_off() const { return wy_off() + static_cast<std::size_t>(n_skills) * hidden; }
    std::size_t size() const { return by_off() + n_skills; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

constexpr double kLossFloor = 1e-9;

inline double step_loss(double p, int r) {
    p = std::clamp(p, kLossFloor, 1.0 - kLossFloor);
    return -(r ? std::log(p) : std::log(1.0 - p));
}

// Negated cross-entropy summed over steps (the minimization objective).
inline double sequence_loss(std::span<const double> probs, std::span<const std::int8_t> targets) {
    if (probs.size() != targets.size()) throw Error("sequence_loss: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) acc += step_loss(probs[i], targets[i]);
    return acc;
}

inline RnnModel init_model(CellKind cell, int input_dim, int hidden, int n_skills,
                           std::uint64_t seed) {
    if (input_dim < 1 || hidden < 1 || n_skills < 1) throw Error("init_model: bad dimensions");
    RnnModel m;
    m.cell = cell;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.n_skills = n_skills;
    m.theta.assign(m.size(), 0.0);

    Rng rng(seed);
    const double bx = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int g = 0; g < m.n_gates(); ++g) {
        double* wx = m.theta.data() + m.wx_off(g);
        for (int i = 0; i < hidden * input_dim; ++i) wx[i] = rng.uniform(-bx, bx);
    }
    for (int g = 0; g < m.n_gates(); ++g) {
        double* wh = m.theta.data() + m.wh_off(g);
        for (int i = 0; i < hidden * hidden; ++i) wh[i] = rng.uniform(-bh, bh);
    }
    double* wy = m.theta.data() + m.wy_off();
    for (int i = 0; i < n_skills * hidden; ++i) wy[i] = rng.uniform(-bh, bh);
    // biases start at zero
    return m;
}

namespace detail {

// Per-sequence activation cache reused across forward/backward.
struct RnnWorkspace {
    std::vector<double> h;                         // T*H
    std::vector<double> c, gi, gf, gc, go, tc;     // gated only, T*H each
    std::vector<double> p;                         // per-step target prob (0.5 on padding)
    std::vector<std::uint8_t> keep;                // dropout keep mask, T*H
    bool dropout = false;
    double inv_keep = 1.0;
    std::vector<double> dh, dc, da, dprev, hdrop;  // backward scratch, H each
};

inline void matvec_rows(const double* w, const double* v, int rows, int cols, double* out,
                        bool accumulate) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<std::size_t>(r) * cols;
        double acc = accumulate ? out[r] : 0.0;
        for (int c = 0; c < cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
}

// Runs steps [begin, end) of the sequence with h (and c) starting at zero.
// Fills the workspace; returns the summed loss over non-padding steps and
// counts them.
inline double rnn_forward(const RnnModel& m, const EncodedSeq& seq, int begin, int end,
                          bool train_mode, double dropout_rate, Rng* drop_rng, RnnWorkspace& ws,
                          std::size_t* steps_counted = nullptr) {
    const int T = end - begin;
    const int H = m.hidden;
    ws.h.assign(static_cast<std::size_t>(T) * H, 0.0);
    ws.p.assign(T, 0.5);
    ws.dropout = train_mode && dropout_rate > 0.0;
    ws.inv_keep = ws.dropout ? 1.0 / (1.0 - dropout_rate) : 1.0;
    if (ws.dropout) ws.keep.assign(static_cast<std::size_t>(T) * H, 1);
    const bool gated = m.cell == CellKind::gated;
    if (gated) {
        const std::size_t n = static_cast<std::size_t>(T) * H;
        ws.c.assign(n, 0.0);
        ws.gi.assign(n, 0.0);
        ws.gf.assign(n, 0.0);
        ws.gc.assign(n, 0.0);
        ws.go.assign(n, 0.0);
        ws.tc.assign(n, 0.0);
    }

    std::vector<double>& pre = ws.da;  // reuse as preactivation scratch
    pre.assign(static_cast<std::size_t>(m.n_gates()) * H, 0.0);
    std::vector<double>& hdrop = ws.hdrop;
    hdrop.assign(H, 0.0);

    double loss = 0.0;
    std::size_t counted = 0;
    const double* theta = m.theta.data();
    for (int t = 0; t < T; ++t) {
        const int st = begin + t;
        const double* h_prev = t > 0 ? ws.h.data() + static_cast<std::size_t>(t - 1) * H : nullptr;
        double* h_t = ws.h.data() + static_cast<std::size_t>(t) * H;

        for (int g = 0; g < m.n_gates(); ++g) {
            double* a = pre.data() + static_cast<std::size_t>(g) * H;
            const double* b = theta + m.b_off(g);
            std::copy(b, b + H, a);
            const double* wx = theta + m.wx_off(g);
            for (std::int32_t k = seq.offsets[st]; k < seq.offsets[st + 1]; ++k) {
                const double* wcol = wx + static_cast<std::size_t>(seq.findex[k]) * H;
                const double val = seq.fvalue[k];
                for (int r = 0; r < H; ++r) a[r] += wcol[r] * val;
            }
            if (h_prev) matvec_rows(theta + m.wh_off(g), h_prev, H, H, a, true);
        }

        if (gated) {
            double* gi = ws.gi.data() + static_cast<std::size_t>(t) * H;
            double* gf = ws.gf.data() + static_cast<std::size_t>(t) * H;
            double* gc = ws.gc.data() + static_cast<std::size_t>(t) * H;
            double* go = ws.go.data() + static_cast<std::size_t>(t) * H;
            double* c_t = ws.c.data() + static_cast<std::size_t>(t) * H;
            double* tc = ws.tc.data() + static_cast<std::size_t>(t) * H;
            const double* c_prev = t > 0 ? ws.c.data() + static_cast<std::size_t>(t - 1) * H : nullptr;
            for (int r = 0; r < H; ++r) {
                gi[r] = sigmoid(pre[gate::kIn * H + r]);
                gf[r] = sigmoid(pre[gate::kForget * H + r]);
                gc[r] = std::tanh(pre[gate::kCand * H + r]);
                go[r] = sigmoid(pre[gate::kOut * H + r]);
                const double cp = c_prev ? c_prev[r] : 0.0;
                c_t[r] = gf[r] * cp + gi[r] * gc[r];
                tc[r] = std::tanh(c_t[r]);
                h_t[r] = go[r] * tc[r];
            }
        } else {
            for (int r = 0; r < H; ++r) h_t[r] = std::tanh(pre[r]);
        }

        const double* h_out = h_t;
        if (ws.dropout) {
            std::uint8_t* keep = ws.keep.data() + static_cast<std::size_t>(t) * H;
            for (int r = 0; r < H; ++r) {
                keep[r] = drop_rng->bernoulli(1.0 - dropout_rate) ? 1 : 0;
                hdrop[r] = keep[r] ? h_t[r] * ws.inv_keep : 0.0;
            }
            h_out = hdrop.data();
        }

        const int sk = seq.skill[st];
        if (sk >= 0) {
            const double* wy = theta + m.wy_off() + static_cast<std::size_t>(sk) * H;
            double z = theta[m.by_off() + sk];
            for (int r = 0; r < H; ++r) z += wy[r] * h_out[r];
            const double p = sigmoid(z);
            ws.p[t] = p;
            loss += step_loss(p, seq.target[st]);
            ++counted;
        }
    }
    if (steps_counted) *steps_counted = counted;
    return loss;
}

// Backpropagation through time for the summed loss of rnn_forward;
// accumulates into grad (same layout as theta).
inline void rnn_backward(const RnnModel& m, const EncodedSeq& seq, int begin, int end,
                         const RnnWorkspace& ws, double* grad) {
    const int T = end - begin;
    const int H = m.hidden;
    const bool gated = m.cell == CellKind::gated;
    const double* theta = m.theta.data();

    std::vector<double> dh(H, 0.0), dc(H, 0.0), da(static_cast<std::size_t>(m.n_gates()) * H, 0.0),
        dprev(H, 0.0), hdrop(H, 0.0);

    for (int t = T - 1; t >= 0; --t) {
        const int st = begin + t;
        const double* h_t = ws.h.data() + static_cast<std::size_t>(t) * H;
        const double* h_prev = t > 0 ? ws.h.data() + static_cast<std::size_t>(t - 1) * H : nullptr;

        const int sk = seq.skill[st];
        if (sk >= 0) {
            const double dz = ws.p[t] - static_cast<double>(seq.target[st]);
            const double* h_out = h_t;
            if (ws.dropout) {
                const std::uint8_t* keep = ws.keep.data() + static_cast<std::size_t>(t) * H;
                for (int r = 0; r < H; ++r) hdrop[r] = keep[r] ? h_t[r] * ws.inv_keep : 0.0;
                h_out = hdrop.data();
            }
            double* gwy = grad + m.wy_off() + static_cast<std::size_t>(sk) * H;
            const double* wy = theta + m.wy_off() + static_cast<std::size_t>(sk) * H;
            grad[m.by_off() + sk] += dz;
            if (ws.dropout) {
                const std::uint8_t* keep = ws.keep.data() + static_cast<std::size_t>(t) * H;
                for (int r = 0; r < H; ++r) {
                    gwy[r] += dz * h_out[r];
                    if (keep[r]) dh[r] += dz * wy[r] * ws.inv_keep;
                }
            } else {
                for (int r = 0; r < H; ++r) {
                    gwy[r] += dz * h_out[r];
                    dh[r] += dz * wy[r];
                }
            }
        }

        if (gated) {
            const double* gi = ws.gi.data() + static_cast<std::size_t>(t) * H;
            const double* gf = ws.gf.data() + static_cast<std::size_t>(t) * H;
            const double* gc = ws.gc.data() + static_cast<std::size_t>(t) * H;
            const double* go = ws.go.data() + static_cast<std::size_t>(t) * H;
            const double* tc = ws.tc.data() + static_cast<std::size_t>(t) * H;
            const double* c_prev = t > 0 ? ws.c.data() + static_cast<std::size_t>(t - 1) * H : nullptr;
            for (int r = 0; r < H; ++r) {
                const double dtc = dh[r] * go[r];
                const double do_ = dh[r] * tc[r];
                const double dct = dc[r] + dtc * (1.0 - tc[r] * tc[r]);
                const double cp = c_prev ? c_prev[r] : 0.0;
                da[gate::kIn * H + r] = dct * gc[r] * gi[r] * (1.0 - gi[r]);
                da[gate::kCand * H + r] = dct * gi[r] * (1.0 - gc[r] * gc[r]);
                da[gate::kForget * H + r] = dct * cp * gf[r] * (1.0 - gf[r]);
                da[gate::kOut * H + r] = do_ * go[r] * (1.0 - go[r]);
                dc[r] = dct * gf[r];
            }
        } else {
            for (int r = 0; r < H; ++r) da[r] = dh[r] * (1.0 - h_t[r] * h_t[r]);
        }

        std::fill(dprev.begin(), dprev.end(), 0.0);
        for (int g = 0; g < m.n_gates(); ++g) {
            const double* dag = da.data() + static_cast<std::size_t>(g) * H;
            double* gb = grad + m.b_off(g);
            double* gwx = grad + m.wx_off(g);
            for (int r = 0; r < H; ++r) gb[r] += dag[r];
            for (std::int32_t k = seq.offsets[st]; k < seq.offsets[st + 1]; ++k) {
                double* gcol = gwx + static_cast<std::size_t>(seq.findex[k]) * H;
                const double val = seq.fvalue[k];
                for (int r = 0; r < H; ++r) gcol[r] += dag[r] * val;
            }
            if (h_prev) {
                double* gwh = grad + m.wh_off(g);
                const double* wh = theta + m.wh_off(g);
                for (int r = 0; r < H; ++r) {
                    const double d = dag[r];
                    if (d == 0.0) continue;
                    double* grow = gwh + static_cast<std::size_t>(r) * H;
                    const double* wrow = wh + static_cast<std::size_t>(r) * H;
                    for (int c2 = 0; c2 < H; ++c2) {
                        grow[c2] += d * h_prev[c2];
                        dprev[c2] += d * wrow[c2];
                    }
                }
            }
        }
        std::swap(dh, dprev);
        if (!gated) std::fill(dc.begin(), dc.end(), 0.0);
    }
}

}  // namespace detail

struct ForwardResult {
    std::vector<double> hidden;   // T x hidden
    std::vector<double> outputs;  // T x n_skills, sigmoid outputs
    int steps = 0;
};

// Full forward pass exposing every skill's output per step. Dropout is only
// drawn in train mode.
inline ForwardResult forward(const RnnModel& m, const EncodedSeq& seq, bool train_mode = false,
                             double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) {
    detail::RnnWorkspace ws;
    Rng rng(dropout_seed);
    detail::rnn_forward(m, seq, 0, seq.steps(), train_mode, dropout_rate, &rng, ws);
    ForwardResult out;
    out.steps = seq.steps();
    out.hidden = ws.h;
    out.outputs.assign(static_cast<std::size_t>(seq.steps()) * m.n_skills, 0.0);
    const int H = m.hidden;
    std::vector<double> hdrop(H);
    for (int t = 0; t < seq.steps(); ++t) {
        const double* h = ws.h.data() + static_cast<std::size_t>(t) * H;
        if (ws.dropout) {
            const std::uint8_t* keep = ws.keep.data() + static_cast<std::size_t>(t) * H;
            for (int r = 0; r < H; ++r) hdrop[r] = keep[r] ? h[r] * ws.inv_keep : 0.0;
            h = hdrop.data();
        }
        for (int s = 0; s < m.n_skills; ++s) {
            const double* wy = m.theta.data() + m.wy_off() + static_cast<std::size_t>(s) * H;
            double z = m.theta[m.by_off() + s];
            for (int r = 0; r < H; ++r) z += wy[r] * h[r];
            out.outputs[static_cast<std::size_t>(t) * m.n_skills + s] = sigmoid(z);
        }
    }
    return out;
}

// Probability of a correct response at each step (target skill's output),
// dropout off. Padding steps give 0.5.
inline std::vector<double> predict(const RnnModel& m, const EncodedSeq& seq) {
    detail::RnnWorkspace ws;
    detail::rnn_forward(m, seq, 0, seq.steps(), false, 0.0, nullptr, ws);
    return ws.p;
}

// Summed loss of the sequence under the model (dropout off).
inline double total_loss(const RnnModel& m, const EncodedSeq& seq) {
    detail::RnnWorkspace ws;
    return detail::rnn_forward(m, seq, 0, seq.steps(), false, 0.0, nullptr, ws);
}

// Exact gradient of the summed loss with respect to every parameter
// (dropout off), via backpropagation through time.
inline std::vector<double> gradient(const RnnModel& m, const EncodedSeq& seq) {
    detail::RnnWorkspace ws;
    detail::rnn_forward(m, seq, 0, seq.steps(), false, 0.0, nullptr, ws);
    std::vector<double> grad(m.size(), 0.0);
    detail::rnn_backward(m, seq, 0, seq.steps(), ws, grad.data());
    return grad;
}

struct TrainReport {
    std::vector<double> train_loss;  // mean per predicted step, per epoch
    std::vector<double> valid_auc;   // per evaluated epoch
    double wall_seconds = 0.0;
    bool diverged = false;
    int best_valid_epoch = -1;  // 0-based epoch with highest validation AUC
};

struct TrainResult {
    RnnModel model;
    TrainReport report;
};

namespace detail {

struct Unit {
    const EncodedSeq* seq;
    int begin;
    int end;
    int id;
};

inline std::uint64_t dropout_seed(std::uint64_t base, int epoch, int unit_id) {
    return mix_seed(mix_seed(base, 0xD60Full),
                    static_cast<std::uint64_t>(epoch) * 1000003ULL + unit_id);
}

}  // namespace detail

inline TrainResult train(const RnnConfig& cfg, int input_dim, int n_skills,
                         std::span<const EncodedSeq> train_seqs,
                         std::span<const EncodedSeq> valid_seqs) {
    if (train_seqs.empty()) throw Error("train: empty training set");
    if (cfg.batch_size < 1 || cfg.hidden_size < 1) throw Error("train: bad config");
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult result;
    result.model =
        init_model(cfg.cell, input_dim, cfg.hidden_size, n_skills, mix_seed(cfg.seed, 0x1217));
    RnnModel& model = result.model;

    // split long sequences into truncation chunks; hidden state resets per chunk
    std::vector<detail::Unit> units;
    for (const auto& seq : train_seqs) {
        const int T = seq.steps();
        if (T == 0) continue;
        const int cap = cfg.truncate_len > 0 ? cfg.truncate_len : T;
        for (int b = 0; b < T; b += cap) {
            units.push_back({&seq, b, std::min(b + cap, T), static_cast<int>(units.size())});
        }
    }
    if (units.empty()) throw Error("train: no non-empty sequences");

    std::vector<int> order(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) order[i] = static_cast<int>(i);

    const int n_threads = std::max(1, cfg.threads);
    std::vector<std::vector<double>> grads(n_threads);
    for (auto& g : grads) g.assign(model.size(), 0.0);
    std::vector<detail::RnnWorkspace> workspaces(n_threads);

    double best_auc = -1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 0x5E0F + epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(b0 + cfg.batch_size, order.size());
            std::vector<double> batch_loss(n_threads, 0.0);
            std::vector<std::size_t> batch_steps(n_threads, 0);

            auto run_slice = [&](int tid, std::size_t lo, std::size_t hi) {
                auto& grad = grads[tid];
                std::fill(grad.begin(), grad.end(), 0.0);
                auto& ws = workspaces[tid];
                for (std::size_t i = lo; i < hi; ++i) {
                    const auto& u = units[order[i]];
                    Rng drop(detail::dropout_seed(cfg.seed, epoch, u.id));
                    std::size_t counted = 0;
                    batch_loss[tid] += detail::rnn_forward(model, *u.seq, u.begin, u.end, true,
                                                           cfg.dropout_rate, &drop, ws, &counted);
                    batch_steps[tid] += counted;
                    detail::rnn_backward(model, *u.seq, u.begin, u.end, ws, grad.data());
                }
            };

            if (n_threads == 1) {
                run_slice(0, b0, b1);
            } else {
                const std::size_t span = b1 - b0;
                const std::size_t per = (span + n_threads - 1) / n_threads;
                std::vector<std::thread> pool;
                for (int tid = 0; tid < n_threads; ++tid) {
                    const std::size_t lo = b0 + std::min<std::size_t>(tid * per, span);
                    const std::size_t hi = b0 + std::min<std::size_t>((tid + 1) * per, span);
                    pool.emplace_back(run_slice, tid, lo, hi);
                }
                for (auto& th : pool) th.join();
                // reduce into grads[0] in thread-index order
                for (int tid = 1; tid < n_threads; ++tid) {
                    for (std::size_t i = 0; i < grads[0].size(); ++i) grads[0][i] += grads[tid][i];
                }
            }
            double loss_sum = 0.0;
            std::size_t step_sum = 0;
            for (int tid = 0; tid < n_threads; ++tid) {
                loss_sum += batch_loss[tid];
                step_sum += batch_steps[tid];
            }
            epoch_loss += loss_sum;
            epoch_steps += step_sum;
            if (step_sum == 0) continue;

            auto& grad = grads[0];
            const double scale = 1.0 / static_cast<double>(step_sum);
            double norm_sq = 0.0;
            for (double& g : grad) {
                g *= scale;
                norm_sq += g * g;
            }
            double clip = 1.0;
            if (cfg.max_grad_norm > 0.0 && norm_sq > cfg.max_grad_norm * cfg.max_grad_norm) {
                clip = cfg.max_grad_norm / std::sqrt(norm_sq);
            }
            const double lr = cfg.learning_rate * clip;
            for (std::size_t i = 0; i < grad.size(); ++i) model.theta[i] -= lr * grad[i];
        }

        const double mean_loss =
            epoch_steps > 0 ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
        result.report.train_loss.push_back(mean_loss);
        if (!std::isfinite(mean_loss)) {
            result.report.diverged = true;
            break;
        }

        if (!valid_seqs.empty() && cfg.validation_every > 0 &&
            (epoch + 1) % cfg.validation_every == 0) {
            std::vector<PredPair> pooled;
            for (const auto& seq : valid_seqs) {
                const auto p = predict(model, seq);
                for (int t = 0; t < seq.steps(); ++t) {
                    if (seq.skill[t] >= 0) pooled.push_back({p[t], seq.target[t]});
                }
            }
            const auto a = auc(pooled);
            const double v = a.value_or(0.5);
            result.report.valid_auc.push_back(v);
            if (v > best_auc) {
                best_auc = v;
                result.report.best_valid_epoch = epoch;
            }
        }
    }

    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// Checkpoint: plain text, parameters at 17 significant digits so reloads are
// bit-exact.
inline void save_model(const RnnModel& m, const RnnConfig& cfg, std::ostream& os) {
    for (double v : m.theta) {
        if (!std::isfinite(v)) throw Error("save_model: non-finite parameter");
    }
    os << "ktrace-rnn-checkpoint v1\n";
    os << "cell " << cell_name(m.cell) << "\n";
    os << "dims " << m.input_dim << " " << m.hidden << " " << m.n_skills << "\n";
    os << "config " << cfg.hidden_size << " " << format_g17(cfg.learning_rate) << " "
       << cfg.batch_size << " " << cfg.epochs << " " << format_g17(cfg.dropout_rate) << " "
       << cfg.seed << " " << format_g17(cfg.max_grad_norm) << " " << cfg.truncate_len << "\n";
    os << "params " << m.theta.size() << "\n";
    for (double v : m.theta) os << format_g17(v) << "\n";
    os << "end\n";
}

inline std::pair<RnnModel, RnnConfig> load_model(std::istream& in) {
    std::string word;
    in >> word;
    if (word != "ktrace-rnn-checkpoint") throw Error("load_model: not a checkpoint");
    in >> word;  // version
    RnnModel m;
    RnnConfig cfg;
    std::size_t n_params = 0;
    while (in >> word) {
        if (word == "cell") {
            std::string c;
            in >> c;
            m.cell = cell_from_name(c);
            cfg.cell = m.cell;
        } else if (word == "dims") {
            in >> m.input_dim >> m.hidden >> m.n_skills;
        } else if (word == "config") {
            in >> cfg.hidden_size >> cfg.learning_rate >> cfg.batch_size >> cfg.epochs >>
                cfg.dropout_rate >> cfg.seed >> cfg.max_grad_norm >> cfg.truncate_len;
        } else if (word == "params") {
            in >> n_params;
            m.theta.resize(n_params);
            for (std::size_t i = 0; i < n_params; ++i) {
                if (!(in >> m.theta[i])) throw Error("load_model: truncated parameters");
            }
        } else if (word == "end") {
            break;
        } else {
            throw Error("load_model: unexpected token '" + word + "'");
        }
    }
    if (m.input_dim < 1 || m.theta.size() != m.size()) {
        throw Error("load_model: inconsistent dimensions");
    }
    return {m, cfg};
}

}  // namespace kt
