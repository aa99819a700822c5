#include "picle/pt_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "picle/mat.hpp"
#include "picle/nn.hpp"
#include "picle/rng.hpp"

namespace picle {

std::vector<double> prior_probs(std::span<const double> accuracies, double temperature) {
    if (accuracies.empty()) throw std::invalid_argument("prior_probs: empty module set");
    if (!(temperature > 0.0)) throw std::invalid_argument("prior_probs: temperature must be positive");
    std::vector<double> scaled(accuracies.size());
    for (std::size_t i = 0; i < accuracies.size(); ++i) scaled[i] = accuracies[i] / temperature;
    const double m = *std::max_element(scaled.begin(), scaled.end());
    double sum = 0.0;
    for (double& s : scaled) {
        s = std::exp(s - m);
        sum += s;
    }
    for (double& s : scaled) s /= sum;
    return scaled;
}

std::vector<double> prior_probs(const std::vector<const LibraryModule*>& modules, double temperature) {
    std::vector<double> acc(modules.size());
    for (std::size_t i = 0; i < modules.size(); ++i) acc[i] = modules[i]->origin_train_accuracy;
    return prior_probs(acc, temperature);
}

double temperature_from(double delta, double xi) {
    if (!(xi > 0.0)) throw std::invalid_argument("temperature_from: xi must be positive");
    return delta / xi;
}

namespace {

// Candidates that can occupy a template slot: same input and output widths.
std::vector<const LibraryModule*> slot_candidates(const Library& lib, const ArchTemplate& tmpl, int layer) {
    const LayerSpec& spec = tmpl.layers[static_cast<std::size_t>(layer - 1)];
    std::vector<const LibraryModule*> out;
    if (layer > lib.num_layers()) return out;
    for (const LibraryModule* m : lib.compatible_modules(layer, spec.input_dim))
        if (m->params.output_dim == spec.output_dim) out.push_back(m);
    return out;
}

const InputModel& require_input_model(const LibraryModule& m) {
    if (!m.input_model) throw std::runtime_error("missing input model for module " + m.module_id);
    return *m.input_model;
}

// Per-example activation streams: two until the concat boundary of a paired
// problem, one afterwards (and throughout for single-input problems).
struct ExampleStreams {
    std::vector<std::vector<double>> h;

    void advance(const LibraryModule& m, bool merge_after) {
        for (auto& s : h) s = module_forward(m.params, m.activation, s);
        if (merge_after && h.size() == 2) {
            h[0].insert(h[0].end(), h[1].begin(), h[1].end());
            h.resize(1);
        }
    }
};

std::vector<ExampleStreams> initial_streams(const Dataset& d) {
    std::vector<ExampleStreams> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        out[i].h.emplace_back(d.row1(i).begin(), d.row1(i).end());
        if (d.paired) out[i].h.emplace_back(d.row2(i).begin(), d.row2(i).end());
    }
    return out;
}

Dataset subsample(const Dataset& d, int n_max, std::uint64_t seed) {
    if (static_cast<int>(d.size()) <= n_max) return d;
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(static_cast<std::size_t>(n_max));
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.input_dim = d.input_dim;
    out.paired = d.paired;
    for (std::size_t i : idx) out.push_row(d.row1(i), d.row2(i), d.labels[i]);
    return out;
}

}  // namespace

PrefixScore score_prefix(const Library& lib, const ArchTemplate& tmpl,
                         const std::vector<const LibraryModule*>& prefix, const Dataset& score_inputs,
                         double temperature) {
    const int len = static_cast<int>(prefix.size());
    if (len < 1 || len > tmpl.num_layers()) throw std::invalid_argument("score_prefix: bad prefix length");

    // Candidate sets, log priors, and the chosen module's index per layer.
    std::vector<std::vector<const LibraryModule*>> sets(static_cast<std::size_t>(len));
    std::vector<std::vector<double>> log_priors(static_cast<std::size_t>(len));
    std::vector<std::size_t> chosen(static_cast<std::size_t>(len));
    for (int i = 1; i <= len; ++i) {
        auto cands = slot_candidates(lib, tmpl, i);
        const auto it = std::find_if(cands.begin(), cands.end(), [&](const LibraryModule* m) {
            return m->module_id == prefix[static_cast<std::size_t>(i - 1)]->module_id;
        });
        if (it == cands.end()) throw std::invalid_argument("score_prefix: prefix module incompatible at layer " + std::to_string(i));
        chosen[static_cast<std::size_t>(i - 1)] = static_cast<std::size_t>(it - cands.begin());
        auto probs = prior_probs(cands, temperature);
        for (double& p : probs) p = std::log(p);
        for (const LibraryModule* m : cands) require_input_model(*m);
        sets[static_cast<std::size_t>(i - 1)] = std::move(cands);
        log_priors[static_cast<std::size_t>(i - 1)] = std::move(probs);
    }

    PrefixScore score;
    score.per_layer_terms.assign(static_cast<std::size_t>(len), 0.0);
    for (const LibraryModule* m : prefix) score.prefix.push_back(m->module_id);

    auto streams = initial_streams(score_inputs);
    std::vector<double> lse_terms;
    for (int i = 1; i <= len; ++i) {
        const std::size_t li = static_cast<std::size_t>(i - 1);
        const LibraryModule& mod = *prefix[li];
        const bool interior = i >= 2 && i <= len - 1;
        for (auto& ex : streams) {
            for (const auto& h : ex.h) {
                score.per_layer_terms[li] += log_density(*mod.input_model, h);
                if (interior) {
                    lse_terms.clear();
                    for (std::size_t c = 0; c < sets[li].size(); ++c)
                        lse_terms.push_back(log_density(*sets[li][c]->input_model, h) + log_priors[li][c]);
                    score.per_layer_terms[li] -= logsumexp(lse_terms);
                }
            }
            ex.advance(mod, tmpl.paired() && i == tmpl.shared_depth);
        }
        score.per_layer_terms[li] += log_priors[li][chosen[li]];
    }
    score.log_posterior = std::accumulate(score.per_layer_terms.begin(), score.per_layer_terms.end(), 0.0);
    return score;
}

PtSearchResult find_best_pt_path(const Library& lib, const DataBundle& data, const ArchTemplate& tmpl,
                                 const PtConfig& cfg, const TrainerFn& trainer) {
    tmpl.validate();
    PtSearchResult result;
    if (lib.num_layers() == 0 || lib.total_modules() == 0) return result;

    const Dataset score_inputs = subsample(data.train, cfg.n_score, cfg.score_seed);
    auto streams = initial_streams(score_inputs);

    std::vector<const LibraryModule*> prefix;
    const int L = tmpl.num_layers();
    for (int layer = 1; layer <= L; ++layer) {
        auto cands = slot_candidates(lib, tmpl, layer);
        // Modules without an input model cannot be scored and are unusable
        // by this search.
        std::erase_if(cands, [](const LibraryModule* m) { return !m->input_model.has_value(); });
        if (cands.empty()) break;
        auto log_priors = prior_probs(cands, cfg.temperature);
        for (double& p : log_priors) p = std::log(p);

        // Greedy extension: the normalizers of the layers below are fixed by
        // the chosen prefix, so candidates at this depth are ranked by their
        // summed input-model log likelihood plus log prior.
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cands.size(); ++c) {
            const InputModel& im = require_input_model(*cands[c]);
            double s = log_priors[c];
            for (const auto& ex : streams)
                for (const auto& h : ex.h) s += log_density(im, h);
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        const LibraryModule& pick = *cands[best];
        prefix.push_back(&pick);

        Path path;
        for (const LibraryModule* m : prefix) path.slots.push_back(PathSlot::reuse(m->module_id));
        for (int j = layer; j < L; ++j) path.slots.push_back(PathSlot::fresh(tmpl.layers[static_cast<std::size_t>(j)]));

        TrainOutcome outcome = trainer(path);
        result.evaluated.push_back(EvaluatedCandidate{path, outcome.eval});

        for (auto& ex : streams) ex.advance(pick, tmpl.paired() && layer == tmpl.shared_depth);
    }

    if (result.evaluated.empty()) return result;
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.evaluated.size(); ++i)
        if (result.evaluated[i].eval.val_accuracy > result.evaluated[best].eval.val_accuracy) best = i;
    result.found = true;
    result.best_path = result.evaluated[best].path;
    result.best_eval = result.evaluated[best].eval;
    return result;
}

}  // namespace picle
