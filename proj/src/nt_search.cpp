#include "picle/nt_search.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "picle/nn.hpp"

namespace picle {

std::vector<SuffixCandidate> suffix_candidates(const Library& lib, int num_layers, int l_min) {
    std::vector<SuffixCandidate> out;
    std::set<std::string> seen;
    const auto& solutions = lib.solutions();
    for (std::size_t s = 0; s < solutions.size(); ++s) {
        const Path& path = solutions[s].path;
        if (path.length() != num_layers) continue;  // e.g. encoder-only solutions
        SuffixCandidate cand;
        cand.source_solution = static_cast<int>(s);
        for (int i = num_layers - l_min; i < num_layers; ++i) {
            const PathSlot& slot = path.slots[static_cast<std::size_t>(i)];
            if (slot.kind != PathSlot::Kind::Reuse) throw std::logic_error("solution path has unresolved slots");
            cand.module_ids.push_back(slot.module_id);
            cand.dedup_key += slot.module_id + "|";
        }
        if (seen.insert(cand.dedup_key).second) out.push_back(std::move(cand));
    }
    return out;
}

std::vector<std::vector<double>> pooled_probe_set(const Library& lib, int probe_layer) {
    std::vector<std::vector<double>> z;
    if (probe_layer < 1 || probe_layer > lib.num_layers()) return z;
    for (const LibraryModule& m : lib.modules_at(probe_layer))
        z.insert(z.end(), m.probe_inputs.begin(), m.probe_inputs.end());
    return z;
}

namespace {

std::vector<double> suffix_apply(const Library& lib, const std::vector<std::string>& suffix,
                                 std::span<const double> z) {
    std::vector<double> h(z.begin(), z.end());
    for (std::size_t i = 0; i < suffix.size(); ++i) {
        const LibraryModule& m = lib.module(suffix[i]);
        h = module_linear(m.params, h);
        if (i + 1 < suffix.size()) apply_activation_inplace(m.activation, h);  // last layer stays pre-activation
    }
    return h;
}

}  // namespace

double function_distance(const Library& lib, const std::vector<std::string>& suffix_a,
                         const std::vector<std::string>& suffix_b,
                         const std::vector<std::vector<double>>& probe_z) {
    if (probe_z.empty()) throw std::invalid_argument("function_distance: empty probe set");
    double total = 0.0;
    for (const auto& z : probe_z) {
        const std::vector<double> fa = suffix_apply(lib, suffix_a, z);
        const std::vector<double> fb = suffix_apply(lib, suffix_b, z);
        if (fa.size() != fb.size()) throw std::invalid_argument("function_distance: output dimension mismatch");
        for (std::size_t i = 0; i < fa.size(); ++i) {
            const double d = fa[i] - fb[i];
            total += d * d;
        }
    }
    return std::sqrt(total / static_cast<double>(probe_z.size()));
}

Mat suffix_distance_matrix(const Library& lib, const std::vector<SuffixCandidate>& candidates,
                           const std::vector<std::vector<double>>& probe_z, int threads) {
    const int n = static_cast<int>(candidates.size());
    Mat d(n, n);
    auto fill_row = [&](int i) {
        for (int j = i + 1; j < n; ++j) {
            const double dist = function_distance(lib, candidates[static_cast<std::size_t>(i)].module_ids,
                                                  candidates[static_cast<std::size_t>(j)].module_ids, probe_z);
            d.at(i, j) = dist;
            d.at(j, i) = dist;
        }
    };
    if (threads > 1 && n > 2) {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int i = t; i < n; i += threads) fill_row(i);
            });
        for (auto& th : pool) th.join();
    } else {
        for (int i = 0; i < n; ++i) fill_row(i);
    }
    return d;
}

NtSearchResult find_best_nt_path(const Library& lib, const DataBundle& data, const ArchTemplate& tmpl,
                                 const NtConfig& cfg, const TrainerFn& trainer) {
    (void)data;
    tmpl.validate();
    NtSearchResult result;
    const int L = tmpl.num_layers();
    if (cfg.l_min < 1 || cfg.l_min >= L) throw std::invalid_argument("find_best_nt_path: bad l_min");

    const auto candidates = suffix_candidates(lib, L, cfg.l_min);
    if (candidates.empty()) return result;
    const int probe_layer = L - cfg.l_min + 1;
    const auto probe_z = pooled_probe_set(lib, probe_layer);
    if (probe_z.empty()) return result;

    auto suffix_path = [&](const std::vector<std::string>& suffix) {
        Path path;
        const int new_layers = L - static_cast<int>(suffix.size());
        for (int j = 0; j < new_layers; ++j) path.slots.push_back(PathSlot::fresh(tmpl.layers[static_cast<std::size_t>(j)]));
        for (const std::string& id : suffix) path.slots.push_back(PathSlot::reuse(id));
        return path;
    };

    // A reused suffix must chain onto the template at its entry layer,
    // including the concat doubling at the shared-depth boundary.
    auto suffix_fits = [&](const std::vector<std::string>& suffix) {
        const int entry = L - static_cast<int>(suffix.size());  // 0-based slot of first reused module
        int prev_out = entry > 0 ? tmpl.layers[static_cast<std::size_t>(entry - 1)].output_dim : 0;
        for (std::size_t i = 0; i < suffix.size(); ++i) {
            const int slot = entry + static_cast<int>(i);
            const LibraryModule& m = lib.module(suffix[i]);
            const int expect = slot == 0 ? tmpl.layers[0].input_dim
                             : (slot == tmpl.shared_depth && tmpl.paired()) ? 2 * prev_out
                                                                            : prev_out;
            if (m.params.input_dim != expect) return false;
            prev_out = m.params.output_dim;
        }
        return true;
    };

    const Mat distances = suffix_distance_matrix(lib, candidates, probe_z, cfg.threads);

    BoConfig bo_cfg;
    bo_cfg.budget = std::min(cfg.c, static_cast<int>(candidates.size()));
    bo_cfg.beta = cfg.beta;
    bo_cfg.ei_threshold = cfg.ei_threshold;
    bo_cfg.jitter = cfg.gp_jitter;

    auto evaluate_candidate = [&](int idx) {
        const Path path = suffix_path(candidates[static_cast<std::size_t>(idx)].module_ids);
        TrainOutcome outcome = trainer(path);
        result.evaluated.push_back(EvaluatedCandidate{path, outcome.eval});
        return outcome.eval.val_accuracy;
    };
    const BoResult bo = bo_maximize(distances, evaluate_candidate, bo_cfg);
    result.stage1_evaluations = static_cast<int>(bo.steps.size());
    result.early_stopped = bo.early_stopped;

    // Suffix-length sweep on the winning solution.
    const int winner = bo.steps[static_cast<std::size_t>(bo.best_step)].candidate;
    const Solution& source = lib.solutions()[static_cast<std::size_t>(candidates[static_cast<std::size_t>(winner)].source_solution)];
    for (int suffix_len = cfg.l_min + 1; suffix_len <= L - 1; ++suffix_len) {
        std::vector<std::string> suffix;
        for (int i = L - suffix_len; i < L; ++i)
            suffix.push_back(source.path.slots[static_cast<std::size_t>(i)].module_id);
        if (!suffix_fits(suffix)) continue;
        TrainOutcome outcome = trainer(suffix_path(suffix));
        result.evaluated.push_back(EvaluatedCandidate{outcome.eval.trained_path, outcome.eval});
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < result.evaluated.size(); ++i)
        if (result.evaluated[i].eval.val_accuracy > result.evaluated[best].eval.val_accuracy) best = i;
    result.found = true;
    result.best_path = result.evaluated[best].path;
    result.best_eval = result.evaluated[best].eval;
    return result;
}

}  // namespace picle
