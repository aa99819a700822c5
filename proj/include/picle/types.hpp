#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "picle/rng.hpp"

namespace picle {

enum class Activation { relu, softmax, sigmoid, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// One slot of the modular architecture. Layer indices are 1-based.
struct LayerSpec {
    int layer_index = 0;
    int input_dim = 0;
    int output_dim = 0;
    Activation activation = Activation::relu;
    // Encoder layers are applied to both inputs of a compositional problem;
    // the first non-shared layer consumes the concatenation of the two
    // branch outputs.
    bool shared_across_branches = false;

    bool operator==(const LayerSpec&) const = default;
    std::string signature() const;
};

/// Layer stack for one problem: `layers[0..shared_depth)` form the encoder
/// applied branch-wise, the rest the head. shared_depth == layers.size()
/// means a single-stream network (no concatenation).
struct ArchTemplate {
    std::vector<LayerSpec> layers;
    int shared_depth = 0;

    int num_layers() const { return static_cast<int>(layers.size()); }
    bool paired() const { return shared_depth < num_layers(); }
    void validate() const;
};

/// Default modular template: `encoder_layers` shared layers of width `width`
/// ending in a `num_classes`-way softmax, then a two-input-wide head ending
/// in a single sigmoid unit.
ArchTemplate make_comp_template(int num_layers, int input_dim, int width, int num_classes);

/// Encoder-only template used by the single-input multi-class problems.
ArchTemplate make_pretext_template(int num_layers, int input_dim, int width, int num_classes);

struct ModuleParams {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<float> weights;  // output_dim x input_dim, row-major
    std::vector<float> biases;   // output_dim
    bool frozen = false;

    bool same_values(const ModuleParams& other) const {
        return input_dim == other.input_dim && output_dim == other.output_dim &&
               weights == other.weights && biases == other.biases;
    }
};

struct PathSlot {
    enum class Kind { Reuse, New };
    Kind kind = Kind::New;
    std::string module_id;  // Reuse only
    LayerSpec spec;         // New only

    static PathSlot reuse(std::string id) {
        PathSlot s;
        s.kind = Kind::Reuse;
        s.module_id = std::move(id);
        return s;
    }
    static PathSlot fresh(LayerSpec spec) {
        PathSlot s;
        s.kind = Kind::New;
        s.spec = std::move(spec);
        return s;
    }
};

/// An L-slot composition choosing, per layer, a library module or a fresh one.
struct Path {
    std::vector<PathSlot> slots;

    int length() const { return static_cast<int>(slots.size()); }
    /// Canonical string; also the basis of path-specific training seeds.
    std::string signature() const;
    int reused_prefix_len() const;
    int reused_suffix_len() const;
    bool all_new() const { return reused_prefix_len() == 0 && reused_suffix_len() == 0; }
};

Path all_new_path(const ArchTemplate& tmpl);

struct TrainConfig {
    double learning_rate = 3e-3;
    double weight_decay = 5e-2;
    int batch_size = 32;
    int max_epochs = 150;
    int patience_updates = 2000;
    std::uint64_t seed_key = 0;  // derived from (global seed, problem id, path signature)
};

/// Training seed shared by parameter init and batch shuffling streams.
inline std::uint64_t derive_path_seed(std::uint64_t global_seed, const std::string& problem_id,
                                      const std::string& path_signature) {
    std::uint64_t h = hash_mix(kFnvOffset, global_seed);
    h = hash_mix(h, problem_id);
    h = hash_mix(h, path_signature);
    return h;
}

struct EvalResult {
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double train_accuracy = 0.0;
    Path trained_path;
    int epochs_run = 0;
};

}  // namespace picle
