#pragma once

// End-to-end command plumbing shared by the CLI: ingest, synthetic data
// generation, the cross-validated evaluation pipeline, and the ablation
// runner. Every command writes deterministic artifacts plus a manifest
// (config echo, seed, content hashes) sufficient to re-run bit-identically.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktrace/common.hpp"
#include "ktrace/dataset.hpp"
#include "ktrace/eval.hpp"
#include "ktrace/synth.hpp"

namespace kt {

struct RunConfig {
    std::string dataset_path;
    std::string preset_name = "canonical";
    std::string model = "bkt-lstm";  // or "all"
    CvConfig cv{};
    std::string out_dir = "out";
    bool write_fold_artifacts = true;
};

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline std::string round3(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

inline std::string metric_cell(const std::optional<double>& v) {
    return v ? round3(*v) : std::string("-");
}

inline std::uint64_t file_hash(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot hash '" + p.string() + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline ordered_json cv_config_json(const CvConfig& cv) {
    ordered_json j;
    j["folds"] = cv.folds;
    j["seed"] = cv.seed;
    j["window"] = cv.window;
    j["clusters"] = cv.clusters;
    j["grid"] = {{"lo", cv.grid.lo},
                 {"hi", cv.grid.hi},
                 {"step", cv.grid.step},
                 {"g_max", cv.grid.g_max},
                 {"s_max", cv.grid.s_max}};
    j["min_support"] = cv.min_support;
    j["fallback"] = {cv.fallback.l0, cv.fallback.t, cv.fallback.g, cv.fallback.s};
    j["rnn"] = {{"hidden", cv.rnn.hidden_size},
                {"learning_rate", cv.rnn.learning_rate},
                {"batch_size", cv.rnn.batch_size},
                {"epochs", cv.rnn.epochs},
                {"dropout", cv.rnn.dropout_rate},
                {"cell", cell_name(cv.rnn.cell)},
                {"max_grad_norm", cv.rnn.max_grad_norm},
                {"truncate_len", cv.rnn.truncate_len},
                {"threads", cv.rnn.threads},
                {"validation_every", cv.rnn.validation_every}};
    j["mask"] = {{"ability", cv.mask.ability},
                 {"difficulty", cv.mask.difficulty},
                 {"skill", cv.mask.skill}};
    return j;
}

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const ordered_json& config,
                           const std::vector<std::filesystem::path>& inputs,
                           const std::vector<std::filesystem::path>& outputs) {
    ordered_json j;
    j["command"] = command;
    j["config"] = config;
    ordered_json in = ordered_json::object();
    for (const auto& p : inputs) in[p.filename().string()] = hash_hex(file_hash(p));
    j["inputs"] = in;
    ordered_json out = ordered_json::object();
    for (const auto& p : outputs) out[p.filename().string()] = hash_hex(file_hash(p));
    j["outputs"] = out;
    std::ofstream os(out_dir / "manifest.json");
    os << j.dump(2) << "\n";
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p);
    if (!os) throw Error("cannot write '" + p.string() + "'");
    return os;
}

}  // namespace detail

struct IngestSummary {
    int skills = 0;
    int problems = 0;
    int students = 0;
    std::size_t records = 0;
    LoadStats load;
    CleanStats cleaned;
};

// Loads, cleans, and writes the canonical dataset; returns the counts for
// the summary line.
inline IngestSummary run_ingest(const RunConfig& rc) {
    namespace fs = std::filesystem;
    const fs::path out_dir(rc.out_dir);
    fs::create_directories(out_dir);

    IngestSummary summary;
    const Dataset raw =
        load_interactions_file(rc.dataset_path, preset(rc.preset_name), &summary.load);
    const Dataset data = clean(raw, &summary.cleaned);
    summary.skills = data.n_skills();
    summary.problems = data.n_problems();
    summary.students = data.n_students();
    summary.records = data.n_records();

    const fs::path cleaned_path = out_dir / "cleaned.csv";
    {
        auto os = detail::open_out(cleaned_path);
        save_canonical(data, os);
    }
    detail::ordered_json config;
    config["dataset"] = rc.dataset_path;
    config["preset"] = rc.preset_name;
    detail::write_manifest(out_dir, "ingest", config, {fs::path(rc.dataset_path)},
                           {cleaned_path});
    return summary;
}

inline void run_synth(const SynthSpec& spec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    const SynthResult res = synthesize(spec);

    const fs::path data_path = dir / "dataset.csv";
    const fs::path truth_path = dir / "truth.csv";
    {
        auto os = detail::open_out(data_path);
        save_canonical(res.data, os);
    }
    {
        auto os = detail::open_out(truth_path);
        save_truth(res, os);
    }
    detail::ordered_json config;
    config["students"] = spec.students;
    config["skills"] = spec.skills;
    config["attempts"] = spec.attempts;
    config["problems_per_skill"] = spec.problems_per_skill;
    config["params"] = {spec.params.l0, spec.params.t, spec.params.g, spec.params.s};
    config["per_skill_params"] = spec.per_skill_params;
    config["difficulty_weight"] = spec.difficulty_weight;
    config["ability_weight"] = spec.ability_weight;
    config["seed"] = spec.seed;
    detail::write_manifest(dir, "synth", config, {}, {data_path, truth_path});
}

namespace detail {

inline void write_report_rows(const std::vector<EvalReport>& reports, std::ostream& os) {
    csv::write_row(os, {"model", "fold", "metric", "value"});
    auto emit = [&](const std::string& model, const std::string& fold, const char* metric,
                    const std::optional<double>& v) {
        if (v) csv::write_row(os, {model, fold, metric, format_g17(*v)});
    };
    for (const auto& rep : reports) {
        for (std::size_t f = 0; f < rep.folds.size(); ++f) {
            const auto& fm = rep.folds[f];
            emit(rep.model, std::to_string(f), "auc", fm.auc);
            emit(rep.model, std::to_string(f), "rmse", fm.rmse);
            emit(rep.model, std::to_string(f), "r2", fm.r2);
        }
        emit(rep.model, "mean", "auc", rep.mean.auc);
        emit(rep.model, "mean", "rmse", rep.mean.rmse);
        emit(rep.model, "mean", "r2", rep.mean.r2);
        for (std::size_t f = 0; f < rep.folds_skill_avg.size(); ++f) {
            const auto& fm = rep.folds_skill_avg[f];
            emit(rep.model, std::to_string(f), "auc_skill_avg", fm.auc);
            emit(rep.model, std::to_string(f), "rmse_skill_avg", fm.rmse);
            emit(rep.model, std::to_string(f), "r2_skill_avg", fm.r2);
        }
        if (!rep.folds_skill_avg.empty()) {
            emit(rep.model, "mean", "auc_skill_avg", rep.mean_skill_avg.auc);
            emit(rep.model, "mean", "rmse_skill_avg", rep.mean_skill_avg.rmse);
            emit(rep.model, "mean", "r2_skill_avg", rep.mean_skill_avg.r2);
        }
    }
}

inline void write_summary(const std::vector<EvalReport>& reports, std::ostream& os) {
    const char* metrics[3] = {"auc", "rmse", "r2"};
    for (int mi = 0; mi < 3; ++mi) {
        os << metrics[mi] << "\n";
        os << "model";
        const std::size_t n_folds = reports.empty() ? 0 : reports[0].folds.size();
        for (std::size_t f = 0; f < n_folds; ++f) os << "\tfold" << f;
        os << "\tmean\n";
        for (const auto& rep : reports) {
            os << rep.model;
            auto pick = [&](const FoldMetrics& fm) -> const std::optional<double>& {
                return mi == 0 ? fm.auc : mi == 1 ? fm.rmse : fm.r2;
            };
            for (const auto& fm : rep.folds) os << "\t" << metric_cell(pick(fm));
            os << "\t" << metric_cell(pick(rep.mean)) << "\n";
        }
        os << "\n";
    }
}

inline std::vector<std::filesystem::path> write_fold_artifacts(
    const std::filesystem::path& out_dir, const Dataset& data, int fold,
    const FoldArtifacts& art) {
    namespace fs = std::filesystem;
    const fs::path dir = out_dir / ("fold" + std::to_string(fold));
    fs::create_directories(dir);
    std::vector<fs::path> written;
    {
        auto os = open_out(dir / "bkt_params.csv");
        save_models(art.bkt.models, data, os);
        written.push_back(dir / "bkt_params.csv");
    }
    if (!art.ability.centroids.empty()) {
        auto os = open_out(dir / "centroids.csv");
        for (const auto& c : art.ability.centroids) {
            std::vector<std::string> row;
            row.reserve(c.size());
            for (double v : c) row.push_back(format_g17(v));
            csv::write_row(os, row);
        }
        written.push_back(dir / "centroids.csv");
    }
    if (data.has_problem_info()) {
        auto os = open_out(dir / "difficulty.csv");
        save_difficulty(art.difficulty, data, os);
        written.push_back(dir / "difficulty.csv");
    }
    return written;
}

}  // namespace detail

// Cross-validated evaluation of the selected model(s); writes machine rows,
// a human-readable summary, per-fold artifacts and the manifest.
inline std::vector<EvalReport> run_pipeline(const RunConfig& rc) {
    namespace fs = std::filesystem;
    const fs::path out_dir(rc.out_dir);
    fs::create_directories(out_dir);

    const Dataset data = clean(load_interactions_file(rc.dataset_path, preset(rc.preset_name)));

    std::vector<ModelKind> kinds;
    if (rc.model == "all") {
        kinds = {ModelKind::bkt_lstm, ModelKind::bkt, ModelKind::birt, ModelKind::pfa,
                 ModelKind::dkt};
    } else {
        kinds = {model_from_name(rc.model)};
    }

    std::vector<fs::path> outputs;
    std::vector<EvalReport> reports;
    for (ModelKind kind : kinds) {
        FoldSink sink;
        if (rc.write_fold_artifacts && kind == ModelKind::bkt_lstm) {
            sink = [&](int fold, const FoldArtifacts& art) {
                for (auto& p : detail::write_fold_artifacts(out_dir, data, fold, art)) {
                    outputs.push_back(std::move(p));
                }
            };
        }
        reports.push_back(cross_validate(data, kind, rc.cv, sink));
    }

    const fs::path rows_path = out_dir / "report_rows.csv";
    {
        auto os = detail::open_out(rows_path);
        detail::write_report_rows(reports, os);
    }
    const fs::path summary_path = out_dir / "summary.txt";
    {
        auto os = detail::open_out(summary_path);
        detail::write_summary(reports, os);
    }
    outputs.push_back(rows_path);
    outputs.push_back(summary_path);

    detail::ordered_json config;
    config["dataset"] = rc.dataset_path;
    config["preset"] = rc.preset_name;
    config["model"] = rc.model;
    config["cv"] = detail::cv_config_json(rc.cv);
    detail::write_manifest(out_dir, "pipeline", config, {fs::path(rc.dataset_path)}, outputs);
    return reports;
}

// Ablation run: four bkt-lstm feature variants, shared folds and seeds.
inline std::vector<EvalReport> run_ablate(const RunConfig& rc) {
    namespace fs = std::filesystem;
    const fs::path out_dir(rc.out_dir);
    fs::create_directories(out_dir);

    const Dataset data = clean(load_interactions_file(rc.dataset_path, preset(rc.preset_name)));
    auto reports = ablate(data, rc.cv);

    const fs::path rows_path = out_dir / "report_rows.csv";
    {
        auto os = detail::open_out(rows_path);
        detail::write_report_rows(reports, os);
    }
    const fs::path summary_path = out_dir / "summary.txt";
    {
        auto os = detail::open_out(summary_path);
        detail::write_summary(reports, os);
    }
    detail::ordered_json config;
    config["dataset"] = rc.dataset_path;
    config["preset"] = rc.preset_name;
    config["cv"] = detail::cv_config_json(rc.cv);
    detail::write_manifest(out_dir, "ablate", config, {fs::path(rc.dataset_path)},
                           {rows_path, summary_path});
    return reports;
}

}  // namespace kt
