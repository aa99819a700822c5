#pragma once

// Deterministic construction, forward evaluation and AdamW training of small
// modular feedforward networks assembled from paths. A single training run is
// single-threaded; identical (seed, data, config) gives bit-identical results.

#include <span>
#include <vector>

#include "picle/data.hpp"
#include "picle/types.hpp"

namespace picle {

/// Fresh module for a layer; weights are scaled-uniform (fan-in) draws from a
/// stream seeded solely by (seed_key, layer_index), biases zero.
ModuleParams init_module(const LayerSpec& spec, std::uint64_t seed_key);

/// W x + b.
std::vector<double> module_linear(const ModuleParams& m, std::span<const double> in);
void apply_activation_inplace(Activation act, std::vector<double>& values);

inline std::vector<double> module_forward(const ModuleParams& m, Activation act, std::span<const double> in) {
    std::vector<double> z = module_linear(m, in);
    apply_activation_inplace(act, z);
    return z;
}

/// A path resolved against concrete parameters, ready to run.
struct NetworkPlan {
    std::vector<LayerSpec> specs;
    std::vector<ModuleParams> modules;
    int shared_depth = 0;  // == specs.size() for single-stream networks
    Path path;

    int num_layers() const { return static_cast<int>(specs.size()); }
    bool paired() const { return shared_depth < num_layers(); }
    void validate() const;
};

struct ForwardTrace {
    // layer_inputs_a[i] is h^{i-1}, the input to layer i+1 (0-based i); for
    // shared layers of a paired network layer_inputs_b[i] holds the second
    // branch, otherwise it is empty.
    std::vector<std::vector<double>> layer_inputs_a;
    std::vector<std::vector<double>> layer_inputs_b;
    std::vector<double> output;
};

ForwardTrace forward(const NetworkPlan& plan, std::span<const double> x1, std::span<const double> x2 = {});

/// Fraction of rows classified correctly (argmax for softmax heads, 0.5
/// threshold for sigmoid heads).
double evaluate_accuracy(const NetworkPlan& plan, const Dataset& data);

/// Mean loss over a dataset: binary cross-entropy for sigmoid heads,
/// cross-entropy for softmax heads. Exposed for gradient checking.
double dataset_loss(const NetworkPlan& plan, const Dataset& data);

/// Analytic loss gradients for every parameter of every module (frozen ones
/// included), laid out as weights-then-biases per module.
std::vector<std::vector<double>> dataset_gradients(const NetworkPlan& plan, const Dataset& data);

struct TrainOutcome {
    EvalResult eval;
    std::vector<ModuleParams> modules;  // trained snapshot, frozen modules untouched
};

/// AdamW with decoupled weight decay on the non-frozen modules; early stopping
/// on validation accuracy checked once per epoch, patience counted in updates.
/// Returns the parameters that achieved the best logged validation accuracy.
TrainOutcome train_and_evaluate(const NetworkPlan& plan, const DataBundle& data, const TrainConfig& cfg);

}  // namespace picle
