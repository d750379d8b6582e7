// ktrace: knowledge-tracing toolkit CLI.
//
// Subcommands:
//   ingest    load a raw interaction log, clean it, write the canonical file
//   synth     generate a synthetic dataset with known ground truth
//   pipeline  cross-validated evaluation of one model or all of them
//   ablate    the four bkt-lstm feature-ablation variants
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ktrace/pipeline.hpp"

namespace {

void add_cv_options(CLI::App* cmd, kt::RunConfig& rc, std::string& cell) {
    cmd->add_option("--seed", rc.cv.seed, "Random seed")->capture_default_str();
    cmd->add_option("--folds", rc.cv.folds, "Cross-validation folds")->capture_default_str();
    cmd->add_option("--window", rc.cv.window, "Attempts per time interval")
        ->capture_default_str();
    cmd->add_option("--clusters", rc.cv.clusters, "Ability profile clusters")
        ->capture_default_str();
    cmd->add_option("--grid-step", rc.cv.grid.step, "BKT grid step")->capture_default_str();
    cmd->add_option("--g-max", rc.cv.grid.g_max, "BKT guess cap")->capture_default_str();
    cmd->add_option("--s-max", rc.cv.grid.s_max, "BKT slip cap")->capture_default_str();
    cmd->add_option("--min-support", rc.cv.min_support, "Min students per difficulty bin")
        ->capture_default_str();
    cmd->add_option("--hidden", rc.cv.rnn.hidden_size, "Hidden layer size")
        ->capture_default_str();
    cmd->add_option("--lr", rc.cv.rnn.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--batch", rc.cv.rnn.batch_size, "Batch size (students)")
        ->capture_default_str();
    cmd->add_option("--epochs", rc.cv.rnn.epochs, "Training epochs")->capture_default_str();
    cmd->add_option("--dropout", rc.cv.rnn.dropout_rate, "Dropout rate on h_t")
        ->capture_default_str();
    cmd->add_option("--cell", cell, "Recurrent cell: gated or simple")->capture_default_str();
    cmd->add_option("--clip", rc.cv.rnn.max_grad_norm, "Gradient norm clip")
        ->capture_default_str();
    cmd->add_option("--truncate", rc.cv.rnn.truncate_len, "BPTT truncation length")
        ->capture_default_str();
    cmd->add_option("--threads", rc.cv.rnn.threads, "Within-batch worker threads")
        ->capture_default_str();
    cmd->add_option("--validate-every", rc.cv.rnn.validation_every,
                    "Epochs between validation metrics (0 = off)")
        ->capture_default_str();
}

void print_reports(const std::vector<kt::EvalReport>& reports) {
    for (const auto& rep : reports) {
        std::printf("%-12s", rep.model.c_str());
        auto cell = [](const std::optional<double>& v) {
            return v ? kt::detail::round3(*v) : std::string("-");
        };
        std::printf(" auc=%s rmse=%s r2=%s (%zu predictions)\n", cell(rep.mean.auc).c_str(),
                    cell(rep.mean.rmse).c_str(), cell(rep.mean.r2).c_str(), rep.mean.n);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ktrace: knowledge tracing toolkit"};
    app.require_subcommand(1);

    kt::RunConfig rc;
    std::string cell = "gated";

    auto* ingest = app.add_subcommand("ingest", "Clean a raw interaction log");
    ingest->add_option("--dataset", rc.dataset_path, "Input file")->required();
    ingest->add_option("--preset", rc.preset_name, "Column preset: " + kt::preset_names())
        ->capture_default_str();
    ingest->add_option("--out", rc.out_dir, "Output directory")->capture_default_str();

    kt::SynthSpec synth_spec;
    std::string synth_out = "out";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--students", synth_spec.students)->capture_default_str();
    synth->add_option("--skills", synth_spec.skills)->capture_default_str();
    synth->add_option("--attempts", synth_spec.attempts)->capture_default_str();
    synth->add_option("--problems-per-skill", synth_spec.problems_per_skill)
        ->capture_default_str();
    synth->add_option("--l0", synth_spec.params.l0)->capture_default_str();
    synth->add_option("--t", synth_spec.params.t)->capture_default_str();
    synth->add_option("--g", synth_spec.params.g)->capture_default_str();
    synth->add_option("--s", synth_spec.params.s)->capture_default_str();
    synth->add_flag("--per-skill-params", synth_spec.per_skill_params,
                    "Sample parameters per skill");
    synth->add_option("--difficulty-weight", synth_spec.difficulty_weight)
        ->capture_default_str();
    synth->add_option("--ability-weight", synth_spec.ability_weight)->capture_default_str();
    synth->add_option("--seed", synth_spec.seed)->capture_default_str();
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

    auto* pipeline = app.add_subcommand("pipeline", "Cross-validated evaluation");
    pipeline->add_option("--dataset", rc.dataset_path, "Input file")->required();
    pipeline->add_option("--preset", rc.preset_name, "Column preset")->capture_default_str();
    pipeline
        ->add_option("--model", rc.model, "bkt-lstm, bkt, birt, pfa, dkt or all")
        ->capture_default_str();
    pipeline->add_option("--out", rc.out_dir, "Output directory")->capture_default_str();
    add_cv_options(pipeline, rc, cell);

    auto* ablate = app.add_subcommand("ablate", "Feature ablation (bkt-lstm-1..4)");
    ablate->add_option("--dataset", rc.dataset_path, "Input file")->required();
    ablate->add_option("--preset", rc.preset_name, "Column preset")->capture_default_str();
    ablate->add_option("--out", rc.out_dir, "Output directory")->capture_default_str();
    add_cv_options(ablate, rc, cell);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    // bad values for choice flags are usage errors, not runtime failures
    try {
        rc.cv.rnn.cell = kt::cell_from_name(cell);
        if (ingest->parsed() || pipeline->parsed() || ablate->parsed()) {
            kt::preset(rc.preset_name);
        }
        if (pipeline->parsed() && rc.model != "all") kt::model_from_name(rc.model);
    } catch (const kt::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (ingest->parsed()) {
            const auto summary = kt::run_ingest(rc);
            std::printf("skills=%d problems=%d students=%d records=%zu\n", summary.skills,
                        summary.problems, summary.students, summary.records);
            if (summary.load.malformed_rows || summary.load.missing_skill_rows) {
                std::fprintf(stderr, "warning: skipped %zu malformed rows, %zu missing-skill rows\n",
                             summary.load.malformed_rows, summary.load.missing_skill_rows);
            }
            std::fprintf(stderr,
                         "cleaning removed %zu repeat attempts, %zu duplicates, %zu missing-problem rows\n",
                         summary.cleaned.repeat_attempts, summary.cleaned.duplicates,
                         summary.cleaned.missing_problem);
        } else if (synth->parsed()) {
            kt::run_synth(synth_spec, synth_out);
            std::printf("wrote %s/dataset.csv and %s/truth.csv\n", synth_out.c_str(),
                        synth_out.c_str());
        } else if (pipeline->parsed()) {
            print_reports(kt::run_pipeline(rc));
        } else if (ablate->parsed()) {
            print_reports(kt::run_ablate(rc));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
