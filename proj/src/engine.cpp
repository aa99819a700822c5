#include "picle/engine.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace picle {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::picle: return "picle";
        case Mode::pt_only: return "pt_only";
        case Mode::nt_only: return "nt_only";
        case Mode::sa: return "sa";
        case Mode::rs: return "rs";
    }
    throw std::logic_error("unknown mode");
}

Mode mode_from_string(const std::string& s) {
    for (Mode m : {Mode::picle, Mode::pt_only, Mode::nt_only, Mode::sa, Mode::rs})
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown mode: " + s);
}

void EngineConfig::validate() const {
    if (num_layers < 4) throw std::invalid_argument("engine config: num_layers must be >= 4");
    if (width < 1 || num_classes < 2) throw std::invalid_argument("engine config: bad architecture");
    if (effective_l_min() < 1 || effective_l_min() >= num_layers) throw std::invalid_argument("engine config: bad l_min");
    if (effective_c() < 1) throw std::invalid_argument("engine config: c must be >= 1");
    if (probe_count < 1) throw std::invalid_argument("engine config: probe_count must be >= 1");
    if (projection_dim < 1) throw std::invalid_argument("engine config: projection_dim must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("engine config: temperature must be positive");
    if (n_score < 1 || n_fit_max < 2) throw std::invalid_argument("engine config: bad sample caps");
    if (threads < 1) throw std::invalid_argument("engine config: threads must be >= 1");
}

ArchTemplate template_for(const EngineConfig& cfg, const DataBundle& bundle) {
    const int head_layers = cfg.num_layers <= 6 ? 2 : 3;
    if (bundle.kind == ProblemKind::pretext)
        return make_pretext_template(cfg.num_layers - head_layers, bundle.input_dim, cfg.width, cfg.num_classes);
    return make_comp_template(cfg.num_layers, bundle.input_dim, cfg.width, cfg.num_classes);
}

namespace {

// Trains each distinct path once per problem; the chosen path's modules are
// reused for the library update without retraining.
class CachingTrainer {
public:
    CachingTrainer(const Library& lib, const DataBundle& bundle, const ArchTemplate& tmpl, const EngineConfig& cfg)
        : lib_(lib), bundle_(bundle), tmpl_(tmpl), cfg_(cfg) {}

    TrainOutcome operator()(const Path& path) {
        const std::string sig = path.signature();
        if (const auto it = cache_.find(sig); it != cache_.end()) return it->second;
        const std::uint64_t seed = derive_path_seed(cfg_.global_seed, bundle_.problem_id, sig);
        NetworkPlan plan = lib_.instantiate(path, tmpl_.shared_depth, seed);
        TrainConfig tc = cfg_.train;
        tc.seed_key = seed;
        TrainOutcome outcome = train_and_evaluate(plan, bundle_, tc);
        cache_.emplace(sig, outcome);
        return outcome;
    }

private:
    const Library& lib_;
    const DataBundle& bundle_;
    const ArchTemplate& tmpl_;
    const EngineConfig& cfg_;
    std::map<std::string, TrainOutcome> cache_;
};

CandidateRecord to_record(const std::string& family, const EvalResult& eval) {
    CandidateRecord r;
    r.family = family;
    r.signature = eval.trained_path.signature();
    r.val_accuracy = eval.val_accuracy;
    r.test_accuracy = eval.test_accuracy;
    r.train_accuracy = eval.train_accuracy;
    r.epochs_run = eval.epochs_run;
    return r;
}

// Runs the trained network over the training inputs and collects, for every
// New slot, the activations feeding that layer (both branches of a shared
// layer), plus the probe-layer inputs.
void library_update_from(RunState& state, const DataBundle& bundle, const ArchTemplate& tmpl,
                         const EngineConfig& cfg, const Path& path, const TrainOutcome& outcome) {
    NetworkPlan plan;
    plan.path = path;
    plan.shared_depth = tmpl.shared_depth;
    plan.modules = outcome.modules;
    for (int i = 0; i < path.length(); ++i) {
        const PathSlot& slot = path.slots[static_cast<std::size_t>(i)];
        plan.specs.push_back(slot.kind == PathSlot::Kind::Reuse ? state.library.module(slot.module_id).spec()
                                                                : slot.spec);
    }
    plan.validate();

    std::set<int> new_layers;
    for (int i = 0; i < path.length(); ++i)
        if (path.slots[static_cast<std::size_t>(i)].kind == PathSlot::Kind::New) new_layers.insert(i + 1);

    Library::Update upd;
    upd.problem_id = bundle.problem_id;
    upd.trained_path = path;
    upd.specs = plan.specs;
    upd.modules = outcome.modules;
    upd.eval = outcome.eval;
    upd.projection_dim = cfg.projection_dim;
    upd.fit_cap = static_cast<std::size_t>(cfg.n_fit_max);

    const int probe_layer = cfg.probe_layer();
    const bool want_probe = new_layers.count(probe_layer) > 0 && probe_layer <= path.length();
    if (!new_layers.empty()) {
        for (std::size_t row = 0; row < bundle.train.size(); ++row) {
            const ForwardTrace trace = forward(plan, bundle.train.row1(row), bundle.train.row2(row));
            for (int layer : new_layers) {
                auto& samples = upd.fit_samples[layer];
                if (samples.size() < upd.fit_cap) samples.push_back(trace.layer_inputs_a[static_cast<std::size_t>(layer - 1)]);
                if (samples.size() < upd.fit_cap && !trace.layer_inputs_b[static_cast<std::size_t>(layer - 1)].empty())
                    samples.push_back(trace.layer_inputs_b[static_cast<std::size_t>(layer - 1)]);
            }
            if (want_probe) {
                auto& probes = upd.probe_samples[probe_layer];
                if (static_cast<int>(probes.size()) < cfg.probe_count)
                    probes.push_back(trace.layer_inputs_a[static_cast<std::size_t>(probe_layer - 1)]);
            }
        }
    }
    state.library.update(upd);
}

void solve_search_modes(RunState& state, const DataBundle& bundle, const EngineConfig& cfg) {
    const ArchTemplate tmpl = template_for(cfg, bundle);
    CachingTrainer trainer(state.library, bundle, tmpl, cfg);
    auto train_fn = [&trainer](const Path& p) { return trainer(p); };

    ProblemRecord rec;
    rec.problem_id = bundle.problem_id;
    rec.kind = bundle.kind;

    struct FamilyBest {
        std::string family;
        Path path;
        TrainOutcome outcome;
    };
    std::vector<FamilyBest> bests;

    // Standalone candidate: always evaluated, and the fallback when the
    // searches find nothing.
    const Path sa_path = all_new_path(tmpl);
    TrainOutcome sa_outcome = trainer(sa_path);
    rec.trainings_sa = 1;
    rec.candidates.push_back(to_record("sa", sa_outcome.eval));
    bests.push_back(FamilyBest{"sa", sa_path, std::move(sa_outcome)});

    if (cfg.mode == Mode::picle || cfg.mode == Mode::pt_only) {
        PtConfig pt_cfg;
        pt_cfg.temperature = cfg.temperature;
        pt_cfg.n_score = cfg.n_score;
        pt_cfg.score_seed = derive_seed(cfg.global_seed, bundle.problem_id + "/pt_score");
        const PtSearchResult pt = find_best_pt_path(state.library, bundle, tmpl, pt_cfg, train_fn);
        rec.trainings_pt = static_cast<int>(pt.evaluated.size());
        for (const EvaluatedCandidate& e : pt.evaluated) rec.candidates.push_back(to_record("pt", e.eval));
        if (pt.found) bests.push_back(FamilyBest{"pt", pt.best_path, trainer(pt.best_path)});
    }

    if ((cfg.mode == Mode::picle || cfg.mode == Mode::nt_only) && bundle.kind == ProblemKind::compositional) {
        NtConfig nt_cfg;
        nt_cfg.l_min = cfg.effective_l_min();
        nt_cfg.c = cfg.effective_c();
        nt_cfg.beta = cfg.beta;
        nt_cfg.ei_threshold = cfg.ei_threshold;
        nt_cfg.gp_jitter = cfg.gp_jitter;
        nt_cfg.threads = cfg.threads;
        const NtSearchResult nt = find_best_nt_path(state.library, bundle, tmpl, nt_cfg, train_fn);
        rec.trainings_nt = static_cast<int>(nt.evaluated.size());
        rec.nt_early_stopped = nt.early_stopped;
        for (const EvaluatedCandidate& e : nt.evaluated) rec.candidates.push_back(to_record("nt", e.eval));
        if (nt.found) bests.push_back(FamilyBest{"nt", nt.best_path, trainer(nt.best_path)});
    }

    // Argmax validation accuracy; ties keep the earlier family (SA, PT, NT),
    // i.e. the fewest reused dependencies.
    std::size_t best = 0;
    for (std::size_t i = 1; i < bests.size(); ++i)
        if (bests[i].outcome.eval.val_accuracy > bests[best].outcome.eval.val_accuracy) best = i;

    rec.chosen_family = bests[best].family;
    rec.chosen_signature = bests[best].path.signature();
    rec.initial_val_accuracy = bests[best].outcome.eval.val_accuracy;
    rec.initial_test_accuracy = bests[best].outcome.eval.test_accuracy;
    rec.initial_train_accuracy = bests[best].outcome.eval.train_accuracy;

    library_update_from(state, bundle, tmpl, cfg, bests[best].path, bests[best].outcome);
    state.records.push_back(std::move(rec));
}

void solve_random_search(RunState& state, const DataBundle& bundle, const EngineConfig& cfg) {
    const ArchTemplate tmpl = template_for(cfg, bundle);
    CachingTrainer trainer(state.library, bundle, tmpl, cfg);
    const int L = tmpl.num_layers();
    const int t = static_cast<int>(state.records.size()) + 1;
    const int budget = cfg.rs_budget > 0 ? cfg.rs_budget : 2 * cfg.num_layers + t;

    // Per-layer choice sets: compatible library modules plus a fresh module.
    std::vector<std::vector<const LibraryModule*>> choices(static_cast<std::size_t>(L));
    double log_total = 0.0;
    for (int layer = 1; layer <= L; ++layer) {
        const LayerSpec& spec = tmpl.layers[static_cast<std::size_t>(layer - 1)];
        if (layer <= state.library.num_layers())
            for (const LibraryModule* m : state.library.compatible_modules(layer, spec.input_dim))
                if (m->params.output_dim == spec.output_dim) choices[static_cast<std::size_t>(layer - 1)].push_back(m);
        log_total += std::log1p(static_cast<double>(choices[static_cast<std::size_t>(layer - 1)].size()));
    }

    auto path_from_digits = [&](const std::vector<int>& digits) {
        Path p;
        for (int i = 0; i < L; ++i) {
            const int d = digits[static_cast<std::size_t>(i)];
            if (d == 0)
                p.slots.push_back(PathSlot::fresh(tmpl.layers[static_cast<std::size_t>(i)]));
            else
                p.slots.push_back(PathSlot::reuse(choices[static_cast<std::size_t>(i)][static_cast<std::size_t>(d - 1)]->module_id));
        }
        return p;
    };

    std::vector<Path> paths;
    std::set<std::string> seen;
    auto add_path = [&](Path p) {
        if (seen.insert(p.signature()).second) paths.push_back(std::move(p));
    };
    add_path(all_new_path(tmpl));

    const bool enumerate_all = log_total <= std::log(1e6) && [&] {
        double total = 1.0;
        for (const auto& c : choices) total *= static_cast<double>(c.size() + 1);
        return total <= static_cast<double>(budget);
    }();
    if (enumerate_all) {
        std::vector<int> digits(static_cast<std::size_t>(L), 0);
        for (;;) {
            add_path(path_from_digits(digits));
            int i = 0;
            while (i < L) {
                if (++digits[static_cast<std::size_t>(i)] <= static_cast<int>(choices[static_cast<std::size_t>(i)].size())) break;
                digits[static_cast<std::size_t>(i)] = 0;
                ++i;
            }
            if (i == L) break;
        }
    } else {
        Rng rng(derive_seed(cfg.global_seed, bundle.problem_id + "/rs"));
        long attempts = 0;
        while (static_cast<int>(paths.size()) < budget && attempts < 100000) {
            ++attempts;
            std::vector<int> digits(static_cast<std::size_t>(L));
            for (int i = 0; i < L; ++i)
                digits[static_cast<std::size_t>(i)] = rng.uniform_int(static_cast<int>(choices[static_cast<std::size_t>(i)].size()) + 1);
            add_path(path_from_digits(digits));
        }
    }

    ProblemRecord rec;
    rec.problem_id = bundle.problem_id;
    rec.kind = bundle.kind;
    std::size_t best = 0;
    std::vector<TrainOutcome> outcomes;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        outcomes.push_back(trainer(paths[i]));
        rec.candidates.push_back(to_record("rs", outcomes.back().eval));
        if (outcomes[i].eval.val_accuracy > outcomes[best].eval.val_accuracy) best = i;
    }
    rec.trainings_rs = static_cast<int>(paths.size());
    rec.chosen_family = "rs";
    rec.chosen_signature = paths[best].signature();
    rec.initial_val_accuracy = outcomes[best].eval.val_accuracy;
    rec.initial_test_accuracy = outcomes[best].eval.test_accuracy;
    rec.initial_train_accuracy = outcomes[best].eval.train_accuracy;

    library_update_from(state, bundle, tmpl, cfg, paths[best], outcomes[best]);
    state.records.push_back(std::move(rec));
}

}  // namespace

void solve_problem(RunState& state, const DataBundle& bundle, const EngineConfig& cfg) {
    cfg.validate();
    if (state.library.num_layers() == 0) state.library = Library(cfg.num_layers);
    if (bundle.train.empty()) throw std::invalid_argument("solve_problem: problem has no training data");
    if (cfg.mode == Mode::rs)
        solve_random_search(state, bundle, cfg);
    else
        solve_search_modes(state, bundle, cfg);
}

std::vector<double> evaluate_sequence_final(const RunState& state, const std::vector<const DataBundle*>& problems,
                                            const EngineConfig& cfg) {
    if (problems.size() != state.library.solutions().size() || problems.size() != state.records.size())
        throw std::invalid_argument("evaluate_sequence_final: solutions and problems misaligned");
    std::vector<double> final_accuracies;
    for (std::size_t t = 0; t < problems.size(); ++t) {
        const Solution& sol = state.library.solutions()[t];
        if (sol.problem_id != problems[t]->problem_id)
            throw std::invalid_argument("evaluate_sequence_final: problem order mismatch at " + sol.problem_id);
        const ArchTemplate tmpl = template_for(cfg, *problems[t]);
        const NetworkPlan plan = state.library.instantiate(sol.path, tmpl.shared_depth, /*path_seed=*/0);
        final_accuracies.push_back(evaluate_accuracy(plan, problems[t]->test));
    }
    return final_accuracies;
}

}  // namespace picle
