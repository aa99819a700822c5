#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "picle/benchgen.hpp"
#include "picle/engine.hpp"

using namespace picle;

namespace {

// Small splits keep these tests quick; the full-size triples are exercised by
// the acceptance suite.
ProblemSpec mini_problem(const std::string& id, int domain_id, int g_id, SizeTriple train, std::uint64_t seed) {
    ProblemSpec p;
    p.problem_id = id;
    p.kind = ProblemKind::compositional;
    p.domain = make_domain(domain_id);
    p.upper = make_upper_task(g_id);
    p.train_triple = train;
    p.val_triple = SizeTriple{150, -1, -1};
    p.test_triple = SizeTriple{250, -1, -1};
    p.seed = seed;
    return p;
}

EngineConfig quick_config(Mode mode, std::uint64_t seed = 1) {
    EngineConfig cfg;
    cfg.mode = mode;
    cfg.global_seed = seed;
    cfg.train.max_epochs = 60;
    cfg.train.patience_updates = 400;
    cfg.n_score = 200;
    return cfg;
}

constexpr SizeTriple kMiniPlus{600, -1, -1};
constexpr SizeTriple kMiniPerc{400, 16, -1};

}  // namespace

TEST_CASE("the first problem falls back to a fully new path") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::picle);
    const DataBundle b = generate_problem(mini_problem("p01", 1, 3, kMiniPlus, 11));
    solve_problem(state, b, cfg);
    REQUIRE(state.records.size() == 1u);
    const ProblemRecord& r = state.records.front();
    CHECK(r.chosen_family == "sa");
    CHECK(r.trainings_sa == 1);
    CHECK(r.trainings_pt == 0);  // empty library: no compatible module at layer 1
    CHECK(r.trainings_nt == 0);  // no previous solutions
    CHECK(state.library.total_modules() == 6u);
    CHECK(state.library.solutions().size() == 1u);
    CHECK(state.library.solutions().front().path.reused_prefix_len() == 6);
}

TEST_CASE("standalone mode grows the library by L modules per problem") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::sa);
    for (int t = 0; t < 3; ++t) {
        const DataBundle b = generate_problem(
            mini_problem("p0" + std::to_string(t + 1), t + 1, t + 1, kMiniPlus, 20 + static_cast<std::uint64_t>(t)));
        solve_problem(state, b, cfg);
        CHECK(state.records.back().trainings_total() == 1);
        CHECK(state.library.total_modules() == 6u * static_cast<std::size_t>(t + 1));
    }
}

TEST_CASE("per-problem training counts respect the budget ceiling") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::picle);
    const int L = cfg.num_layers;
    const int l_min = cfg.effective_l_min();
    for (int t = 0; t < 4; ++t) {
        const DataBundle b = generate_problem(
            mini_problem("p0" + std::to_string(t + 1), t + 1, 2 * t + 1, t == 0 ? kMiniPlus : kMiniPerc,
                         40 + static_cast<std::uint64_t>(t)));
        solve_problem(state, b, cfg);
        const ProblemRecord& r = state.records.back();
        const int candidates = t;  // at most one distinct suffix per earlier problem
        CHECK(r.trainings_sa == 1);
        CHECK(r.trainings_pt <= L);
        if (t == 1) CHECK(r.trainings_pt == L);  // one module per layer: the greedy runs the full depth
        CHECK(r.trainings_nt <= std::min(cfg.effective_c(), candidates) + (L - 1 - l_min));
        CHECK(r.trainings_total() <= 1 + L + std::min(cfg.effective_c(), candidates) + (L - 1 - l_min));
        for (const CandidateRecord& c : r.candidates) {
            // Constant-size training: every candidate is a full L-slot path.
            CHECK(std::count(c.signature.begin(), c.signature.end(), '|') == L - 1);
        }
    }
}

TEST_CASE("pt_only and picle agree on the perceptual-transfer candidate") {
    const auto spec1 = mini_problem("p01", 2, 5, kMiniPlus, 71);
    const auto spec2 = mini_problem("p02", 2, 6, kMiniPerc, 72);  // same domain: transfer is on the table
    const DataBundle b1 = generate_problem(spec1);
    const DataBundle b2 = generate_problem(spec2);

    RunState pt_state, picle_state;
    solve_problem(pt_state, b1, quick_config(Mode::pt_only));
    solve_problem(pt_state, b2, quick_config(Mode::pt_only));
    solve_problem(picle_state, b1, quick_config(Mode::picle));
    solve_problem(picle_state, b2, quick_config(Mode::picle));

    auto pt_family_best = [](const ProblemRecord& r) {
        double best = -1.0;
        for (const CandidateRecord& c : r.candidates)
            if (c.family == "pt") best = std::max(best, c.val_accuracy);
        return best;
    };
    CHECK(pt_family_best(pt_state.records[1]) == pt_family_best(picle_state.records[1]));
    CHECK(pt_state.records[1].trainings_pt == picle_state.records[1].trainings_pt);
}

TEST_CASE("final re-evaluation reproduces the recorded accuracies exactly") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::picle);
    std::vector<DataBundle> bundles;
    bundles.push_back(generate_problem(mini_problem("p01", 1, 7, kMiniPlus, 91)));
    bundles.push_back(generate_problem(mini_problem("p02", 4, 9, kMiniPerc, 92)));
    bundles.push_back(generate_problem(mini_problem("p03", 1, 11, kMiniPerc, 93)));
    for (const DataBundle& b : bundles) solve_problem(state, b, cfg);

    std::vector<const DataBundle*> ptrs;
    for (const DataBundle& b : bundles) ptrs.push_back(&b);
    const std::vector<double> final_accs = evaluate_sequence_final(state, ptrs, cfg);
    REQUIRE(final_accs.size() == 3u);
    for (std::size_t t = 0; t < 3; ++t) CHECK(final_accs[t] == state.records[t].initial_test_accuracy);
    CHECK(evaluate_sequence_final(state, ptrs, cfg) == final_accs);  // bit-identical re-run
}

TEST_CASE("repeating a problem with less data transfers and never hurts") {
    const auto first = mini_problem("p01", 3, 13, kMiniPlus, 111);
    const auto repeat = mini_problem("p02", 3, 13, kMiniPerc, 112);
    const DataBundle b1 = generate_problem(first);
    const DataBundle b2 = generate_problem(repeat);

    RunState picle_state;
    solve_problem(picle_state, b1, quick_config(Mode::picle));
    solve_problem(picle_state, b2, quick_config(Mode::picle));

    RunState sa_state;
    solve_problem(sa_state, b1, quick_config(Mode::sa));
    solve_problem(sa_state, b2, quick_config(Mode::sa));

    const ProblemRecord& chosen = picle_state.records[1];
    CHECK(chosen.chosen_signature.find("reuse[") != std::string::npos);
    CHECK(chosen.initial_test_accuracy >= sa_state.records[1].initial_test_accuracy);
}

TEST_CASE("random search honors its budget, includes the fresh path, and is deterministic") {
    RunState state;
    EngineConfig cfg = quick_config(Mode::rs);
    const DataBundle b1 = generate_problem(mini_problem("p01", 5, 2, kMiniPlus, 121));
    solve_problem(state, b1, cfg);
    CHECK(state.records[0].trainings_rs == 1);  // empty library: only the fresh path exists

    const DataBundle b2 = generate_problem(mini_problem("p02", 6, 4, kMiniPerc, 122));
    solve_problem(state, b2, cfg);
    const ProblemRecord& r2 = state.records[1];
    CHECK(r2.trainings_rs <= 2 * cfg.num_layers + 2);
    bool has_fresh = false;
    std::set<std::string> signatures;
    for (const CandidateRecord& c : r2.candidates) {
        signatures.insert(c.signature);
        has_fresh = has_fresh || c.signature.find("reuse[") == std::string::npos;
    }
    CHECK(has_fresh);
    CHECK(signatures.size() == r2.candidates.size());  // sampled paths are distinct

    RunState replay;
    solve_problem(replay, b1, cfg);
    solve_problem(replay, b2, cfg);
    CHECK(replay.records[1].chosen_signature == r2.chosen_signature);
    CHECK(replay.records[1].initial_test_accuracy == r2.initial_test_accuracy);
}

TEST_CASE("a changed input space disables perceptual transfer but not latent transfer") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::picle);
    solve_problem(state, generate_problem(mini_problem("p01", 8, 14, kMiniPlus, 141)), cfg);

    // Second problem lives in a wider, scrambled input space.
    ProblemSpec sp;
    sp.problem_id = "p02";
    sp.kind = ProblemKind::compositional;
    sp.domain = make_scrambled_domain(9);
    sp.upper = make_upper_task(14);  // same upper task: the head is transferable
    sp.train_triple = kMiniPlus;
    sp.val_triple = SizeTriple{150, -1, -1};
    sp.test_triple = SizeTriple{250, -1, -1};
    sp.seed = 142;
    solve_problem(state, generate_problem(sp), cfg);

    const ProblemRecord& r = state.records[1];
    CHECK(r.trainings_pt == 0);  // no compatible first-layer module
    CHECK(r.trainings_nt > 0);   // interior widths still match
    // Both solutions stay instantiable against the final library.
    for (const Solution& s : state.library.solutions()) {
        const NetworkPlan plan = state.library.instantiate(s.path, 4, 0);
        CHECK(plan.num_layers() == 6);
    }
}

TEST_CASE("a budget of one makes random search behave as standalone") {
    RunState state;
    EngineConfig cfg = quick_config(Mode::rs);
    cfg.rs_budget = 1;
    solve_problem(state, generate_problem(mini_problem("p01", 3, 5, kMiniPlus, 151)), cfg);
    solve_problem(state, generate_problem(mini_problem("p02", 4, 6, kMiniPerc, 152)), cfg);
    const ProblemRecord& r = state.records[1];
    CHECK(r.trainings_rs == 1);
    CHECK(r.chosen_signature.find("reuse[") == std::string::npos);  // forced fresh path
}

TEST_CASE("final evaluation rejects misaligned problem lists") {
    RunState state;
    const EngineConfig cfg = quick_config(Mode::sa);
    const DataBundle b = generate_problem(mini_problem("p01", 1, 1, kMiniPlus, 161));
    solve_problem(state, b, cfg);
    std::vector<const DataBundle*> none;
    CHECK_THROWS_AS(evaluate_sequence_final(state, none, cfg), std::invalid_argument);
}

TEST_CASE("pretext problems train encoder-only networks and feed the library") {
    ProblemSpec pre;
    pre.problem_id = "p01";
    pre.kind = ProblemKind::pretext;
    pre.domain = make_domain(7);
    pre.train_triple = kMiniPlus;
    pre.val_triple = SizeTriple{150, -1, -1};
    pre.test_triple = SizeTriple{250, -1, -1};
    pre.seed = 131;

    RunState state;
    const EngineConfig cfg = quick_config(Mode::picle);
    solve_problem(state, generate_problem(pre), cfg);
    CHECK(state.library.total_modules() == 4u);  // encoder part only
    CHECK(state.records[0].trainings_nt == 0);
    CHECK(state.library.solutions().front().path.length() == 4);

    // A compositional problem on the same domain can now reuse the encoder.
    const DataBundle comp = generate_problem(mini_problem("p02", 7, 8, kMiniPerc, 132));
    solve_problem(state, comp, cfg);
    const ProblemRecord& r = state.records[1];
    CHECK(r.trainings_pt == 4);  // candidates only exist through the encoder layers
}
