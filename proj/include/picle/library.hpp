#pragma once

// Per-layer store of frozen modules with provenance, input-distribution
// models, probe activations, and the list of previous solutions. Append-only:
// solving a problem never mutates or deletes existing entries.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "picle/input_model.hpp"
#include "picle/nn.hpp"
#include "picle/types.hpp"

namespace picle {

struct LibraryModule {
    std::string module_id;
    int layer_index = 0;
    ModuleParams params;  // always frozen
    std::string origin_problem;
    int origin_solution_index = 0;  // insertion order, used for stable tie-breaks
    double origin_train_accuracy = 0.0;
    Activation activation = Activation::relu;
    bool shared_across_branches = false;
    std::optional<InputModel> input_model;
    std::vector<std::vector<double>> probe_inputs;

    LayerSpec spec() const {
        return LayerSpec{layer_index, params.input_dim, params.output_dim, activation, shared_across_branches};
    }
};

struct Solution {
    std::string problem_id;
    Path path;  // every slot resolved to a library module
    EvalResult eval;
};

class Library {
public:
    Library() = default;
    explicit Library(int num_layers) : layers_(static_cast<std::size_t>(num_layers)) {}

    int num_layers() const { return static_cast<int>(layers_.size()); }
    const std::vector<Solution>& solutions() const { return solutions_; }
    const std::vector<LibraryModule>& modules_at(int layer_index) const;
    std::size_t total_modules() const;

    /// Modules at a layer whose input dimension matches; stable order by
    /// origin problem index. The empty list is a valid result.
    std::vector<const LibraryModule*> compatible_modules(int layer_index, int required_input_dim) const;

    const LibraryModule* find(const std::string& module_id) const;
    const LibraryModule& module(const std::string& module_id) const;

    struct Update {
        std::string problem_id;
        Path trained_path;                    // as trained; New slots become new library modules
        std::vector<LayerSpec> specs;         // spec per slot
        std::vector<ModuleParams> modules;    // trained parameters per slot
        EvalResult eval;
        // Activation samples feeding each New slot, keyed by layer index.
        std::map<int, std::vector<std::vector<double>>> fit_samples;
        // Probe activations for the New module at the probe layer, if any.
        std::map<int, std::vector<std::vector<double>>> probe_samples;
        int projection_dim = 20;
        std::size_t fit_cap = 5000;
    };

    /// Freezes and stores every New module of the trained path, fits its
    /// input model, records probe inputs, and appends the solution (with New
    /// slots resolved to the fresh module ids). Returns the stored path.
    Path update(const Update& u);

    /// Resolves a path into a runnable plan; New slots are initialized from
    /// the path-specific seed.
    NetworkPlan instantiate(const Path& path, int shared_depth, std::uint64_t path_seed) const;

    void save(const std::filesystem::path& dir) const;
    static Library load(const std::filesystem::path& dir);

    bool same_values(const Library& other) const;

private:
    std::vector<std::vector<LibraryModule>> layers_;
    std::vector<Solution> solutions_;
};

}  // namespace picle
