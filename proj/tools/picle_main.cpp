#include <CLI11.hpp>

#include "picle/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Modular continual-learning engine: benchmark generation, runs, reports"};
    app.require_subcommand(1);

    std::string spec_path, gen_out;
    CLI::App* generate = app.add_subcommand("generate", "Generate a benchmark sequence directory from a spec file");
    generate->add_option("spec", spec_path, "Sequence spec JSON (pattern, length, seed)")->required();
    generate->add_option("out", gen_out, "Output sequence directory")->required();

    picle::cli::RunOptions run_opts;
    std::string run_seq, run_out, run_mode, run_config;
    std::uint64_t run_seed = 0;
    int run_threads = 0;
    bool has_mode = false;
    CLI::App* run = app.add_subcommand("run", "Run an engine mode over a generated sequence");
    run->add_option("sequence", run_seq, "Generated sequence directory")->required();
    run->add_option("out", run_out, "Run output directory")->required();
    run->add_option("--config", run_config, "Engine config JSON");
    auto* mode_opt = run->add_option("--mode", run_mode, "picle | pt_only | nt_only | sa | rs");
    auto* seed_opt = run->add_option("--seed", run_seed, "Global seed");
    auto* threads_opt = run->add_option("--threads", run_threads, "Worker threads for pure per-candidate work");
    run->add_flag("--resume", run_opts.resume, "Continue an interrupted run from the last completed problem");

    std::vector<std::string> report_dirs;
    std::string report_csv;
    CLI::App* report = app.add_subcommand("report", "Compare finished runs");
    report->add_option("runs", report_dirs, "Run directories")->required();
    auto* csv_opt = report->add_option("--out", report_csv, "Also write the CSV table to this path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : picle::cli::kExitConfig;
    }

    (void)has_mode;
    if (generate->parsed()) return picle::cli::cmd_generate(spec_path, gen_out);
    if (run->parsed()) {
        run_opts.sequence_dir = run_seq;
        run_opts.out_dir = run_out;
        if (!run_config.empty()) run_opts.config_path = run_config;
        if (mode_opt->count() > 0) run_opts.mode = run_mode;
        if (seed_opt->count() > 0) run_opts.seed = run_seed;
        if (threads_opt->count() > 0) run_opts.threads = run_threads;
        return picle::cli::cmd_run(run_opts);
    }
    if (report->parsed()) {
        std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
        std::optional<std::filesystem::path> out;
        if (csv_opt->count() > 0) out = report_csv;
        return picle::cli::cmd_report(dirs, out);
    }
    return picle::cli::kExitConfig;
}
