#pragma once

// Desk-scale compositional benchmark generator. A problem pairs an input
// domain (8 Gaussian clusters, nearest-center lower labeler) with an upper
// labeling function over the 8x8 grid of class pairs; sequences share
// components according to fixed patterns so that specific kinds of transfer
// are possible.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "picle/data.hpp"
#include "picle/rng.hpp"

namespace picle {

inline constexpr int kNumDomains = 9;
inline constexpr int kNumUpperTasks = 16;
inline constexpr int kClassCount = 8;

struct DomainSpec {
    int domain_id = 0;
    int input_dim = 16;   // what the learner sees
    int latent_dim = 16;  // where the clusters live
    int class_count = kClassCount;
    std::vector<std::vector<double>> centers;  // class_count x latent_dim
    double noise_scale = 0.25;
    std::uint64_t seed = 0;
    bool scrambled = false;
    std::vector<double> scramble;  // input_dim x latent_dim when scrambled
};

/// One of the 9 fixed benchmark domains. Cluster centers are pairwise at
/// least 4 noise scales apart, so the lower task is learnable.
DomainSpec make_domain(int domain_id);

/// Same cluster structure pushed through a fixed random linear map into a
/// 32-dimensional input space; forces an incompatible first-layer shape.
DomainSpec make_scrambled_domain(int domain_id);

/// Nearest-center class of a latent point.
int classify(const DomainSpec& d, std::span<const double> latent);

/// Rejection-samples a latent point whose nearest center is `cls`.
std::vector<double> sample_latent(const DomainSpec& d, int cls, Rng& rng);

std::vector<double> latent_to_input(const DomainSpec& d, std::span<const double> latent);

struct UpperTask {
    int g_id = 0;   // 1..16
    int g1_id = 0;  // 1..4, class -> coordinate map
    int g2_id = 0;  // 1..4, grid pattern
    std::array<int, kClassCount> relabel{};                          // class index -> coordinate 1..8
    std::array<std::array<int, kClassCount>, kClassCount> grid{};    // [coord1-1][coord2-1] -> 0/1

    int label(int class1, int class2) const {
        return grid[static_cast<std::size_t>(relabel[static_cast<std::size_t>(class1)] - 1)]
                   [static_cast<std::size_t>(relabel[static_cast<std::size_t>(class2)] - 1)];
    }
    int positive_cells() const;
};

UpperTask make_upper_task(int g_id);

/// (count, unique inputs, grid cells); -1 means unrestricted.
struct SizeTriple {
    int count = 0;
    int unique_inputs = -1;
    int cells = -1;
};

inline constexpr SizeTriple kTriplePlus{4000, -1, -1};
inline constexpr SizeTriple kTripleMinusPerceptual{1500, 40, -1};
inline constexpr SizeTriple kTripleMinusLatent{1500, -1, 30};
inline constexpr SizeTriple kTripleFewShot{10, 20, 10};
inline constexpr SizeTriple kTripleVal{800, -1, -1};
inline constexpr SizeTriple kTripleTest{1000, -1, -1};

struct ProblemSpec {
    std::string problem_id;
    ProblemKind kind = ProblemKind::compositional;
    DomainSpec domain;
    std::optional<UpperTask> upper;  // absent for pretext problems
    SizeTriple train_triple;
    SizeTriple val_triple = kTripleVal;
    SizeTriple test_triple = kTripleTest;
    std::uint64_t seed = 0;
};

/// Generates train/val/test splits honoring the triples: inputs drawn from a
/// capped unique pool when requested, rows cycling over the allowed grid
/// cells, labels computed exactly by the upper-of-lower composition, splits
/// disjoint in sampled noise.
DataBundle generate_problem(const ProblemSpec& spec);

enum class SeqPattern { s_pl, s_minus, s_out, s_out_star, s_out_2star, s_in, s_sp, s_few, s_plus, s_long };

std::string to_string(SeqPattern p);
SeqPattern pattern_from_string(const std::string& s);

struct SequenceSpec {
    SeqPattern pattern = SeqPattern::s_pl;
    int length = 6;  // s_long defaults to 20
    std::uint64_t seed = 0;
};

struct RealizedProblem {
    ProblemSpec spec;
    DataBundle data;
};

struct RealizedSequence {
    SequenceSpec spec;
    std::vector<RealizedProblem> problems;
};

/// Instantiates the pattern with concrete domains and upper tasks (sampled
/// without replacement except s_long) and generates all datasets.
RealizedSequence realize_sequence(const SequenceSpec& seq);

/// Verifies the sharing relations of the pattern (which problems share a
/// domain or an upper task, and which must differ); throws on violation.
void check_pattern(const RealizedSequence& seq);

struct MetricsReport {
    double average_accuracy = 0.0;          // mean final accuracy
    std::optional<double> transfer_last;    // final-problem gain over the standalone reference
    double forgetting = 0.0;                // mean (final - initial)
    std::vector<double> initial_accuracies;
    std::vector<double> final_accuracies;
};

MetricsReport compute_metrics(const std::vector<double>& initial_accuracies,
                              const std::vector<double>& final_accuracies,
                              std::optional<double> sa_reference_last);

}  // namespace picle
