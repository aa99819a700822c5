#pragma once

// Orchestrates the outer continual-learning loop over a problem sequence:
// evaluate a standalone candidate, run the perceptual- and latent-transfer
// searches as the mode allows, keep the argmax-validation path, update the
// library. Also provides the random-search baseline and the end-of-sequence
// re-evaluation used by the forgetting metric.

#include <string>
#include <vector>

#include "picle/data.hpp"
#include "picle/library.hpp"
#include "picle/nt_search.hpp"
#include "picle/pt_search.hpp"

namespace picle {

enum class Mode { picle, pt_only, nt_only, sa, rs };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct EngineConfig {
    Mode mode = Mode::picle;
    int num_layers = 6;
    int width = 32;
    int num_classes = 8;
    int l_min = 0;            // 0: 3 when num_layers >= 8, else 2
    int projection_dim = 20;  // k
    double temperature = 0.01;
    double beta = 2.0;
    int c = 0;  // stage-1 NT budget; 0: num_layers + l_min
    int probe_count = 40;
    int n_fit_max = 5000;
    int n_score = 1000;
    double ei_threshold = 1e-3;
    double gp_jitter = 1e-6;
    int rs_budget = 0;  // 0: 2 * num_layers + problem index
    std::uint64_t global_seed = 0;
    int threads = 1;
    TrainConfig train;

    int effective_l_min() const { return l_min > 0 ? l_min : (num_layers >= 8 ? 3 : 2); }
    int effective_c() const { return c > 0 ? c : num_layers + effective_l_min(); }
    int probe_layer() const { return num_layers - effective_l_min() + 1; }
    void validate() const;
};

struct CandidateRecord {
    std::string family;  // sa | pt | nt | rs
    std::string signature;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double train_accuracy = 0.0;
    int epochs_run = 0;
};

struct ProblemRecord {
    std::string problem_id;
    ProblemKind kind = ProblemKind::compositional;
    std::string chosen_family;
    std::string chosen_signature;
    double initial_val_accuracy = 0.0;
    double initial_test_accuracy = 0.0;
    double initial_train_accuracy = 0.0;
    int trainings_sa = 0;
    int trainings_pt = 0;
    int trainings_nt = 0;
    int trainings_rs = 0;
    bool nt_early_stopped = false;
    std::vector<CandidateRecord> candidates;

    int trainings_total() const { return trainings_sa + trainings_pt + trainings_nt + trainings_rs; }
};

struct RunState {
    Library library;
    std::vector<ProblemRecord> records;
};

/// Layer stack for one problem; pretext problems use the encoder part only.
ArchTemplate template_for(const EngineConfig& cfg, const DataBundle& bundle);

/// Solves one problem according to the mode and appends a record. All
/// candidate trainings derive their seeds from (global seed, problem id,
/// path signature), so repeated runs are bit-identical.
void solve_problem(RunState& state, const DataBundle& bundle, const EngineConfig& cfg);

/// Re-evaluates every stored solution on its problem's test set against the
/// final library; frozen modules make this equal the initially recorded
/// accuracy.
std::vector<double> evaluate_sequence_final(const RunState& state, const std::vector<const DataBundle*>& problems,
                                            const EngineConfig& cfg);

}  // namespace picle
