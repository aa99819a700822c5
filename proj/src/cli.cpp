#include "picle/cli.hpp"

#include <chrono>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "picle/io.hpp"

namespace picle::cli {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

Json triple_to_json(const SizeTriple& t) { return Json::array({t.count, t.unique_inputs, t.cells}); }

std::string dataset_csv(const Dataset& d) {
    std::ostringstream os;
    if (d.paired) {
        for (int i = 0; i < d.input_dim; ++i) os << "x1_" << i << ",";
        for (int i = 0; i < d.input_dim; ++i) os << "x2_" << i << ",";
    } else {
        for (int i = 0; i < d.input_dim; ++i) os << "x_" << i << ",";
    }
    os << "y\n";
    for (std::size_t r = 0; r < d.size(); ++r) {
        for (double v : d.row1(r)) os << format_double(v) << ",";
        if (d.paired)
            for (double v : d.row2(r)) os << format_double(v) << ",";
        os << d.labels[r] << "\n";
    }
    return os.str();
}

Dataset dataset_from_csv(const std::string& text, int input_dim, bool paired) {
    Dataset d;
    d.input_dim = input_dim;
    d.paired = paired;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file");
    const std::size_t want = static_cast<std::size_t>(input_dim) * (paired ? 2 : 1) + 1;
    std::vector<double> x1(static_cast<std::size_t>(input_dim)), x2(static_cast<std::size_t>(input_dim));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t start = 0, field = 0;
        int label = 0;
        while (start <= line.size()) {
            std::size_t end = line.find(',', start);
            if (end == std::string::npos) end = line.size();
            const std::string_view cell(line.data() + start, end - start);
            if (field < static_cast<std::size_t>(input_dim))
                x1[field] = parse_double(cell);
            else if (paired && field < 2 * static_cast<std::size_t>(input_dim))
                x2[field - static_cast<std::size_t>(input_dim)] = parse_double(cell);
            else
                label = static_cast<int>(parse_double(cell));
            ++field;
            start = end + 1;
            if (end == line.size()) break;
        }
        if (field != want) throw std::runtime_error("bad dataset row width");
        d.push_row(x1, paired ? std::span<const double>(x2) : std::span<const double>{}, label);
    }
    return d;
}

Json record_to_json(const ProblemRecord& r) {
    Json cands = Json::array();
    for (const CandidateRecord& c : r.candidates)
        cands.push_back(Json{{"family", c.family},
                             {"signature", c.signature},
                             {"val_accuracy", c.val_accuracy},
                             {"test_accuracy", c.test_accuracy},
                             {"train_accuracy", c.train_accuracy},
                             {"epochs_run", c.epochs_run}});
    return Json{{"problem_id", r.problem_id},
                {"kind", to_string(r.kind)},
                {"chosen_family", r.chosen_family},
                {"chosen_signature", r.chosen_signature},
                {"initial_val_accuracy", r.initial_val_accuracy},
                {"initial_test_accuracy", r.initial_test_accuracy},
                {"initial_train_accuracy", r.initial_train_accuracy},
                {"trainings_sa", r.trainings_sa},
                {"trainings_pt", r.trainings_pt},
                {"trainings_nt", r.trainings_nt},
                {"trainings_rs", r.trainings_rs},
                {"nt_early_stopped", r.nt_early_stopped},
                {"candidates", std::move(cands)}};
}

ProblemRecord record_from_json(const Json& j) {
    ProblemRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.kind = problem_kind_from_string(j.at("kind").get<std::string>());
    r.chosen_family = j.at("chosen_family").get<std::string>();
    r.chosen_signature = j.at("chosen_signature").get<std::string>();
    r.initial_val_accuracy = j.at("initial_val_accuracy").get<double>();
    r.initial_test_accuracy = j.at("initial_test_accuracy").get<double>();
    r.initial_train_accuracy = j.at("initial_train_accuracy").get<double>();
    r.trainings_sa = j.at("trainings_sa").get<int>();
    r.trainings_pt = j.at("trainings_pt").get<int>();
    r.trainings_nt = j.at("trainings_nt").get<int>();
    r.trainings_rs = j.at("trainings_rs").get<int>();
    r.nt_early_stopped = j.at("nt_early_stopped").get<bool>();
    for (const Json& c : j.at("candidates")) {
        CandidateRecord cr;
        cr.family = c.at("family").get<std::string>();
        cr.signature = c.at("signature").get<std::string>();
        cr.val_accuracy = c.at("val_accuracy").get<double>();
        cr.test_accuracy = c.at("test_accuracy").get<double>();
        cr.train_accuracy = c.at("train_accuracy").get<double>();
        cr.epochs_run = c.at("epochs_run").get<int>();
        r.candidates.push_back(std::move(cr));
    }
    return r;
}

/// Standalone reference on a problem: the test accuracy of its all-new
/// candidate (present in every mode, including random search).
std::optional<double> standalone_reference(const ProblemRecord& r) {
    for (const CandidateRecord& c : r.candidates)
        if (c.signature.find("reuse[") == std::string::npos) return c.test_accuracy;
    return std::nullopt;
}

struct RunFiles {
    Json records;
    bool completed = false;
};

RunFiles read_run(const fs::path& dir) {
    RunFiles f;
    f.records = Json::parse(read_text_file(dir / "records.json"));
    f.completed = f.records.value("completed", false);
    return f;
}

}  // namespace

SequenceSpec sequence_spec_from_file(const fs::path& spec_path) {
    const Json j = Json::parse(read_text_file(spec_path));
    SequenceSpec s;
    s.pattern = pattern_from_string(j.at("pattern").get<std::string>());
    s.length = j.value("length", s.pattern == SeqPattern::s_long ? 20 : 6);
    s.seed = j.value("seed", std::uint64_t{0});
    return s;
}

void write_sequence_dir(const RealizedSequence& seq, const fs::path& dir) {
    fs::create_directories(dir / "problems");
    Json meta;
    meta["format_version"] = kFormatVersion;
    meta["pattern"] = to_string(seq.spec.pattern);
    meta["length"] = seq.spec.length;
    meta["seed"] = seq.spec.seed;
    Json problems = Json::array();
    for (const RealizedProblem& p : seq.problems) {
        Json pj;
        pj["problem_id"] = p.spec.problem_id;
        pj["kind"] = to_string(p.spec.kind);
        pj["input_dim"] = p.spec.domain.input_dim;
        pj["domain_id"] = p.spec.domain.domain_id;
        pj["scrambled"] = p.spec.domain.scrambled;
        pj["g_id"] = p.spec.upper ? p.spec.upper->g_id : 0;
        pj["train_triple"] = triple_to_json(p.spec.train_triple);
        pj["val_triple"] = triple_to_json(p.spec.val_triple);
        pj["test_triple"] = triple_to_json(p.spec.test_triple);
        pj["seed"] = p.spec.seed;
        problems.push_back(pj);

        const fs::path pdir = dir / "problems" / p.spec.problem_id;
        fs::create_directories(pdir);
        write_text_file(pdir / "problem.json", pj.dump(1));
        write_text_file(pdir / "train.csv", dataset_csv(p.data.train));
        write_text_file(pdir / "val.csv", dataset_csv(p.data.val));
        write_text_file(pdir / "test.csv", dataset_csv(p.data.test));
    }
    meta["problems"] = std::move(problems);
    write_text_file(dir / "sequence.json", meta.dump(1));
}

std::vector<DataBundle> load_sequence_dir(const fs::path& dir) {
    if (!fs::exists(dir / "sequence.json")) throw std::runtime_error("not a sequence directory: " + dir.string());
    const Json meta = Json::parse(read_text_file(dir / "sequence.json"));
    if (meta.at("format_version").get<int>() != kFormatVersion) throw std::runtime_error("unsupported sequence format");
    std::vector<DataBundle> bundles;
    for (const Json& pj : meta.at("problems")) {
        DataBundle b;
        b.problem_id = pj.at("problem_id").get<std::string>();
        b.kind = problem_kind_from_string(pj.at("kind").get<std::string>());
        b.input_dim = pj.at("input_dim").get<int>();
        const fs::path pdir = dir / "problems" / b.problem_id;
        const bool paired = b.kind == ProblemKind::compositional;
        b.train = dataset_from_csv(read_text_file(pdir / "train.csv"), b.input_dim, paired);
        b.val = dataset_from_csv(read_text_file(pdir / "val.csv"), b.input_dim, paired);
        b.test = dataset_from_csv(read_text_file(pdir / "test.csv"), b.input_dim, paired);
        bundles.push_back(std::move(b));
    }
    return bundles;
}

EngineConfig engine_config_from_json_file(const fs::path& config_path) {
    const Json j = Json::parse(read_text_file(config_path));
    EngineConfig cfg;
    if (j.contains("mode")) cfg.mode = mode_from_string(j.at("mode").get<std::string>());
    cfg.num_layers = j.value("num_layers", cfg.num_layers);
    cfg.width = j.value("width", cfg.width);
    cfg.num_classes = j.value("num_classes", cfg.num_classes);
    cfg.l_min = j.value("l_min", cfg.l_min);
    cfg.projection_dim = j.value("projection_dim", cfg.projection_dim);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.beta = j.value("beta", cfg.beta);
    cfg.c = j.value("c", cfg.c);
    cfg.probe_count = j.value("probe_count", cfg.probe_count);
    cfg.n_fit_max = j.value("n_fit_max", cfg.n_fit_max);
    cfg.n_score = j.value("n_score", cfg.n_score);
    cfg.ei_threshold = j.value("ei_threshold", cfg.ei_threshold);
    cfg.gp_jitter = j.value("gp_jitter", cfg.gp_jitter);
    cfg.rs_budget = j.value("rs_budget", cfg.rs_budget);
    cfg.global_seed = j.value("global_seed", cfg.global_seed);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("train")) {
        const Json& t = j.at("train");
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.patience_updates = t.value("patience_updates", cfg.train.patience_updates);
    }
    return cfg;
}

namespace {

Json config_to_json(const EngineConfig& cfg) {
    return Json{{"mode", to_string(cfg.mode)},
                {"num_layers", cfg.num_layers},
                {"width", cfg.width},
                {"num_classes", cfg.num_classes},
                {"l_min", cfg.effective_l_min()},
                {"projection_dim", cfg.projection_dim},
                {"temperature", cfg.temperature},
                {"beta", cfg.beta},
                {"c", cfg.effective_c()},
                {"probe_count", cfg.probe_count},
                {"n_fit_max", cfg.n_fit_max},
                {"n_score", cfg.n_score},
                {"ei_threshold", cfg.ei_threshold},
                {"gp_jitter", cfg.gp_jitter},
                {"rs_budget", cfg.rs_budget},
                {"global_seed", cfg.global_seed},
                {"threads", cfg.threads},
                {"train",
                 Json{{"learning_rate", cfg.train.learning_rate},
                      {"weight_decay", cfg.train.weight_decay},
                      {"batch_size", cfg.train.batch_size},
                      {"max_epochs", cfg.train.max_epochs},
                      {"patience_updates", cfg.train.patience_updates}}}};
}

void write_records(const fs::path& out_dir, const EngineConfig& cfg, const fs::path& sequence_dir,
                   const std::vector<ProblemRecord>& records, const std::vector<double>* final_accs, bool completed) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["mode"] = to_string(cfg.mode);
    j["global_seed"] = cfg.global_seed;
    j["sequence_dir"] = sequence_dir.string();
    Json arr = Json::array();
    for (const ProblemRecord& r : records) arr.push_back(record_to_json(r));
    j["problems"] = std::move(arr);
    if (final_accs) j["final_test_accuracies"] = *final_accs;
    j["completed"] = completed;
    write_text_file_atomic(out_dir / "records.json", j.dump(1));
}

void write_manifest(const fs::path& out_dir, const EngineConfig& cfg, const fs::path& sequence_dir, bool finalized,
                    int problems_completed, double wall_seconds, const std::vector<double>& per_problem_seconds) {
    Json j;
    j["run"] = out_dir.filename().string();
    j["sequence_dir"] = sequence_dir.string();
    j["mode"] = to_string(cfg.mode);
    j["global_seed"] = cfg.global_seed;
    j["build"] = std::string("cxx-") +
#if defined(__clang__)
                 "clang-" + std::to_string(__clang_major__);
#elif defined(__GNUC__)
                 "gcc-" + std::to_string(__GNUC__);
#else
                 "unknown";
#endif
    j["problems_completed"] = problems_completed;
    j["wall_clock_seconds"] = wall_seconds;
    j["per_problem_seconds"] = per_problem_seconds;
    j["finalized"] = finalized;
    write_text_file_atomic(out_dir / "manifest.json", j.dump(1));
}

}  // namespace

int cmd_generate(const fs::path& spec_path, const fs::path& out_dir) {
    SequenceSpec spec;
    try {
        spec = sequence_spec_from_file(spec_path);
    } catch (const std::exception& e) {
        std::cerr << "error: invalid sequence spec: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        const RealizedSequence seq = realize_sequence(spec);
        write_sequence_dir(seq, out_dir);
        std::cout << "generated " << seq.problems.size() << " problems under " << out_dir.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_run(const RunOptions& options) {
    EngineConfig cfg;
    try {
        if (options.config_path) cfg = engine_config_from_json_file(*options.config_path);
        if (options.mode) cfg.mode = mode_from_string(*options.mode);
        if (options.seed) cfg.global_seed = *options.seed;
        if (options.threads) cfg.threads = *options.threads;
        if (const char* env = std::getenv("PICLE_THREADS")) cfg.threads = std::stoi(env);
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: invalid run configuration: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        const std::vector<DataBundle> bundles = load_sequence_dir(options.sequence_dir);
        fs::create_directories(options.out_dir);
        write_text_file(options.out_dir / "config.json", config_to_json(cfg).dump(1));

        RunState state;
        std::size_t start_index = 0;
        if (options.resume && fs::exists(options.out_dir / "records.json")) {
            const Json j = Json::parse(read_text_file(options.out_dir / "records.json"));
            if (j.value("completed", false)) {
                std::cout << "run already completed\n";
                return kExitOk;
            }
            for (const Json& r : j.at("problems")) state.records.push_back(record_from_json(r));
            start_index = state.records.size();
            if (start_index > 0) state.library = Library::load(options.out_dir / "library");
        }

        std::vector<double> per_problem_seconds(start_index, 0.0);
        write_manifest(options.out_dir, cfg, options.sequence_dir, false, static_cast<int>(start_index), 0.0,
                       per_problem_seconds);
        const auto run_start = std::chrono::steady_clock::now();

        for (std::size_t t = start_index; t < bundles.size(); ++t) {
            const auto t0 = std::chrono::steady_clock::now();
            solve_problem(state, bundles[t], cfg);
            state.library.save(options.out_dir / "library");
            write_records(options.out_dir, cfg, options.sequence_dir, state.records, nullptr, false);
            per_problem_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
            write_manifest(options.out_dir, cfg, options.sequence_dir, false, static_cast<int>(t + 1),
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count(),
                           per_problem_seconds);
            std::cout << "problem " << bundles[t].problem_id << ": chose " << state.records.back().chosen_family
                      << " (val " << format_double(state.records.back().initial_val_accuracy) << ", test "
                      << format_double(state.records.back().initial_test_accuracy) << ", "
                      << state.records.back().trainings_total() << " trainings)\n";
        }

        std::vector<const DataBundle*> problem_ptrs;
        for (const DataBundle& b : bundles) problem_ptrs.push_back(&b);
        const std::vector<double> final_accs = evaluate_sequence_final(state, problem_ptrs, cfg);
        std::vector<double> initial_accs;
        for (const ProblemRecord& r : state.records) initial_accs.push_back(r.initial_test_accuracy);
        const std::optional<double> sa_ref = standalone_reference(state.records.back());
        const MetricsReport metrics = compute_metrics(initial_accs, final_accs, sa_ref);

        std::ostringstream csv;
        csv << "metric,value\n";
        csv << "problems," << state.records.size() << "\n";
        csv << "average_accuracy," << format_double(metrics.average_accuracy) << "\n";
        csv << "forgetting," << format_double(metrics.forgetting) << "\n";
        if (metrics.transfer_last) csv << "transfer_last," << format_double(*metrics.transfer_last) << "\n";
        int total_trainings = 0;
        for (const ProblemRecord& r : state.records) total_trainings += r.trainings_total();
        csv << "trainings_total," << total_trainings << "\n";
        write_text_file_atomic(options.out_dir / "metrics.csv", csv.str());

        write_records(options.out_dir, cfg, options.sequence_dir, state.records, &final_accs, true);
        write_manifest(options.out_dir, cfg, options.sequence_dir, true, static_cast<int>(bundles.size()),
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count(),
                       per_problem_seconds);
        std::cout << "run complete: average_accuracy=" << format_double(metrics.average_accuracy)
                  << " forgetting=" << format_double(metrics.forgetting) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

int cmd_report(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& csv_out) {
    struct Row {
        std::string name, mode, status, sequence_dir;
        double a = 0.0, f = 0.0;
        std::optional<double> tr_last;
        std::optional<double> final_last, own_sa_last;
        int trainings = 0;
        bool usable = false;
    };
    std::vector<Row> rows;
    for (const fs::path& dir : run_dirs) {
        Row row;
        row.name = dir.filename().string();
        try {
            const RunFiles rf = read_run(dir);
            row.mode = rf.records.value("mode", "?");
            row.sequence_dir = rf.records.value("sequence_dir", "");
            if (!rf.completed) {
                row.status = "incomplete";
            } else {
                std::vector<double> initial, final_accs;
                for (const Json& p : rf.records.at("problems")) initial.push_back(p.at("initial_test_accuracy").get<double>());
                final_accs = rf.records.at("final_test_accuracies").get<std::vector<double>>();
                for (const Json& p : rf.records.at("problems"))
                    row.trainings += p.at("trainings_sa").get<int>() + p.at("trainings_pt").get<int>() +
                                     p.at("trainings_nt").get<int>() + p.at("trainings_rs").get<int>();
                const ProblemRecord last = record_from_json(rf.records.at("problems").back());
                row.own_sa_last = standalone_reference(last);
                const MetricsReport m = compute_metrics(initial, final_accs, row.own_sa_last);
                row.a = m.average_accuracy;
                row.f = m.forgetting;
                row.tr_last = m.transfer_last;
                row.final_last = final_accs.back();
                row.status = "complete";
                row.usable = true;
            }
        } catch (const std::exception& e) {
            std::cerr << "warning: cannot read run " << dir.string() << ": " << e.what() << "\n";
            row.status = "unreadable";
        }
        rows.push_back(std::move(row));
    }

    // Prefer a completed standalone run on the same sequence as the transfer
    // reference.
    for (Row& row : rows) {
        if (!row.usable || !row.final_last) continue;
        for (const Row& other : rows)
            if (other.usable && other.mode == "sa" && other.sequence_dir == row.sequence_dir && other.final_last) {
                row.tr_last = *row.final_last - *other.final_last;
                break;
            }
    }

    std::ostringstream text, csv;
    csv << "run,mode,status,average_accuracy,transfer_last,forgetting,trainings_total\n";
    text << "run                      mode      status      A        Tr_last  F        trainings\n";
    for (const Row& row : rows) {
        auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("n/a"); };
        csv << row.name << "," << row.mode << "," << row.status << ",";
        if (row.usable)
            csv << format_double(row.a) << "," << opt(row.tr_last) << "," << format_double(row.f) << "," << row.trainings;
        else
            csv << ",,,";
        csv << "\n";
        std::ostringstream line;
        line.setf(std::ios::left);
        line.width(25);
        line << row.name.substr(0, 24);
        auto pad = [&line](const std::string& s, int w) {
            line.width(w);
            line << s.substr(0, static_cast<std::size_t>(w - 1));
        };
        pad(row.mode, 10);
        pad(row.status, 12);
        if (row.usable) {
            pad(format_double(row.a).substr(0, 7), 9);
            pad(opt(row.tr_last).substr(0, 7), 9);
            pad(format_double(row.f).substr(0, 7), 9);
            line << row.trainings;
        }
        text << line.str() << "\n";
    }
    std::cout << text.str();
    std::cout << csv.str();
    if (csv_out) write_text_file(*csv_out, csv.str());
    return kExitOk;
}

}  // namespace picle::cli
