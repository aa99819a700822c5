#pragma once

// Latent-transfer search: Bayesian optimization over previous-solution
// suffixes with a Monte Carlo function-space distance kernel, followed by a
// suffix-length sweep on the winning solution.

#include <string>
#include <vector>

#include "picle/gp.hpp"
#include "picle/library.hpp"
#include "picle/pt_search.hpp"  // TrainerFn, EvaluatedCandidate

namespace picle {

struct SuffixCandidate {
    std::vector<std::string> module_ids;  // layers L-l_min+1 .. L
    int source_solution = 0;              // earliest solution with this suffix
    std::string dedup_key;
};

/// Deduplicated length-l_min suffixes of the full-depth previous solutions,
/// ordered by solution index.
std::vector<SuffixCandidate> suffix_candidates(const Library& lib, int num_layers, int l_min);

/// All probe activations stored for modules at `probe_layer`, pooled.
std::vector<std::vector<double>> pooled_probe_set(const Library& lib, int probe_layer);

/// Monte Carlo estimate of the function-space distance between two module
/// suffixes: root mean squared difference of the composed outputs over the
/// probe set, final layer compared pre-activation.
double function_distance(const Library& lib, const std::vector<std::string>& suffix_a,
                         const std::vector<std::string>& suffix_b,
                         const std::vector<std::vector<double>>& probe_z);

/// Pairwise distances between candidate suffixes; rows may be computed in
/// parallel (`threads` > 1), entries are pure functions of frozen modules.
Mat suffix_distance_matrix(const Library& lib, const std::vector<SuffixCandidate>& candidates,
                           const std::vector<std::vector<double>>& probe_z, int threads = 1);

struct NtConfig {
    int l_min = 2;
    int c = 8;  // stage-1 evaluation budget
    double beta = 2.0;
    double ei_threshold = 1e-3;
    double gp_jitter = 1e-6;
    int threads = 1;
};

struct NtSearchResult {
    bool found = false;
    Path best_path;
    EvalResult best_eval;
    std::vector<EvaluatedCandidate> evaluated;
    int stage1_evaluations = 0;
    bool early_stopped = false;
};

/// Stage 1: UCB Bayesian optimization over length-l_min suffix candidates
/// (budget min(c, #candidates), EI early stopping, the two most central
/// suffixes evaluated first). Stage 2: suffix lengths l_min+1 .. L-1 of the
/// winning solution. Returns the overall argmax by validation accuracy;
/// `found == false` when no previous solution spans the full depth.
NtSearchResult find_best_nt_path(const Library& lib, const DataBundle& data, const ArchTemplate& tmpl,
                                 const NtConfig& cfg, const TrainerFn& trainer);

}  // namespace picle
