#pragma once

// Perceptual-transfer search: greedy extension of a reused prefix, scored by
// the module posterior (input-model likelihoods combined with a
// softmax-over-accuracy prior), one trained network per prefix length.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "picle/data.hpp"
#include "picle/library.hpp"
#include "picle/types.hpp"

namespace picle {

/// Softmax over accuracies at temperature T, computed with max subtraction.
std::vector<double> prior_probs(std::span<const double> accuracies, double temperature);
std::vector<double> prior_probs(const std::vector<const LibraryModule*>& modules, double temperature);

/// Temperature that makes an accuracy advantage `delta` compensate a
/// log-likelihood deficit `xi`.
double temperature_from(double delta, double xi);

struct PrefixScore {
    std::vector<std::string> prefix;
    double log_posterior = 0.0;           // unnormalized
    std::vector<double> per_layer_terms;  // sums to log_posterior
};

/// Unnormalized log posterior of a reused prefix given the scoring inputs:
/// per-example input-model log likelihoods for each prefix module, minus the
/// library-wide log-sum-exp normalizers for interior layers, plus one log
/// prior per chosen module.
PrefixScore score_prefix(const Library& lib, const ArchTemplate& tmpl,
                         const std::vector<const LibraryModule*>& prefix, const Dataset& score_inputs,
                         double temperature);

using TrainerFn = std::function<TrainOutcome(const Path&)>;

struct EvaluatedCandidate {
    Path path;
    EvalResult eval;
};

struct PtSearchResult {
    bool found = false;
    Path best_path;
    EvalResult best_eval;
    std::vector<EvaluatedCandidate> evaluated;
};

struct PtConfig {
    double temperature = 0.01;
    int n_score = 1000;
    std::uint64_t score_seed = 0;
};

/// Greedy loop: for each depth, extend the prefix with the argmax-posterior
/// library module, train the resulting path (reused prefix + fresh suffix),
/// and return the evaluated path with the best validation accuracy. Trains at
/// most one network per layer; stops early at the first layer with no
/// compatible module. `found == false` signals no usable candidate.
PtSearchResult find_best_pt_path(const Library& lib, const DataBundle& data, const ArchTemplate& tmpl,
                                 const PtConfig& cfg, const TrainerFn& trainer);

}  // namespace picle
