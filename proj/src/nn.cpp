#include "picle/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "picle/rng.hpp"

namespace picle {

namespace {

void apply_linear(const ModuleParams& m, std::span<const double> in, std::vector<double>& z) {
    z.assign(static_cast<std::size_t>(m.output_dim), 0.0);
    for (int r = 0; r < m.output_dim; ++r) {
        const float* row = m.weights.data() + static_cast<std::size_t>(r) * m.input_dim;
        double acc = static_cast<double>(m.biases[static_cast<std::size_t>(r)]);
        for (int c = 0; c < m.input_dim; ++c) acc += static_cast<double>(row[c]) * in[static_cast<std::size_t>(c)];
        z[static_cast<std::size_t>(r)] = acc;
    }
}

void apply_activation(Activation act, std::vector<double>& z) {
    switch (act) {
        case Activation::relu:
            for (double& v : z) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::softmax: {
            const double m = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (double& v : z) {
                v = std::exp(v - m);
                sum += v;
            }
            for (double& v : z) v /= sum;
            break;
        }
        case Activation::sigmoid:
            for (double& v : z) v = 1.0 / (1.0 + std::exp(-v));
            break;
        case Activation::identity:
            break;
    }
}

// dL/da -> dL/dz in place, given the layer's post-activation output a.
void activation_backward(Activation act, std::span<const double> a, std::vector<double>& g) {
    switch (act) {
        case Activation::relu:
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a[i] <= 0.0) g[i] = 0.0;
            break;
        case Activation::softmax: {
            double inner = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * a[i];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = a[i] * (g[i] - inner);
            break;
        }
        case Activation::sigmoid:
            for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a[i] * (1.0 - a[i]);
            break;
        case Activation::identity:
            break;
    }
}

enum class Head { binary, multiclass };

Head head_kind(const NetworkPlan& plan) {
    const LayerSpec& top = plan.specs.back();
    if (top.activation == Activation::sigmoid && top.output_dim == 1) return Head::binary;
    if (top.activation == Activation::softmax) return Head::multiclass;
    throw std::invalid_argument("unsupported head: " + top.signature());
}

// Loss and dL/dz_top from top-layer logits; numerically stable forms.
double head_loss(Head head, std::span<const double> z, int label, std::vector<double>* gz) {
    if (head == Head::binary) {
        const double zt = z[0];
        const double y = static_cast<double>(label);
        const double loss = std::max(zt, 0.0) - zt * y + std::log1p(std::exp(-std::abs(zt)));
        if (gz) {
            const double p = 1.0 / (1.0 + std::exp(-zt));
            gz->assign(1, p - y);
        }
        return loss;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double lse = m + std::log(sum);
    const double loss = lse - z[static_cast<std::size_t>(label)];
    if (gz) {
        gz->resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) (*gz)[i] = std::exp(z[i] - lse);
        (*gz)[static_cast<std::size_t>(label)] -= 1.0;
    }
    return loss;
}

int head_prediction(Head head, std::span<const double> out) {
    if (head == Head::binary) return out[0] >= 0.5 ? 1 : 0;
    return static_cast<int>(std::max_element(out.begin(), out.end()) - out.begin());
}

// Per-example evaluation state. Streams hold post-activation values:
// branch_a[i] / branch_b[i] = output of shared layer i (index 0 = raw input),
// fused[j] = output of layer j for j >= shared_depth (fused[sd] is the
// concatenation input convention handled below).
struct Streams {
    std::vector<std::vector<double>> branch_a, branch_b;
    std::vector<std::vector<double>> fused;  // fused[j] = input to layer j (0-based), j in [sd, L]; fused[L] = head output
    std::vector<double> ztop;
};

struct Runner {
    const NetworkPlan* plan = nullptr;
    const std::vector<ModuleParams>* modules = nullptr;
    int L = 0, sd = 0;
    bool paired = false;
    Streams s;

    void bind(const NetworkPlan& p, const std::vector<ModuleParams>& mods) {
        plan = &p;
        modules = &mods;
        L = p.num_layers();
        sd = p.shared_depth;
        paired = p.paired();
        s.branch_a.assign(static_cast<std::size_t>(sd) + 1, {});
        s.branch_b.assign(static_cast<std::size_t>(sd) + 1, {});
        s.fused.assign(static_cast<std::size_t>(L) + 1, {});
    }

    Head head() const { return head_kind(*plan); }

    // Runs layers [from, L). For from < sd the branch streams must hold
    // values at index `from`; for from >= sd, fused[from] must be set.
    void forward_from(int from) {
        const auto& mods = *modules;
        for (int i = std::max(from, 0); i < sd; ++i) {
            apply_linear(mods[static_cast<std::size_t>(i)], s.branch_a[static_cast<std::size_t>(i)], s.branch_a[static_cast<std::size_t>(i) + 1]);
            if (i == L - 1) s.ztop = s.branch_a[static_cast<std::size_t>(i) + 1];
            apply_activation(plan->specs[static_cast<std::size_t>(i)].activation, s.branch_a[static_cast<std::size_t>(i) + 1]);
            if (paired) {
                apply_linear(mods[static_cast<std::size_t>(i)], s.branch_b[static_cast<std::size_t>(i)], s.branch_b[static_cast<std::size_t>(i) + 1]);
                apply_activation(plan->specs[static_cast<std::size_t>(i)].activation, s.branch_b[static_cast<std::size_t>(i) + 1]);
            }
        }
        if (from < sd && sd < L) {
            if (paired) {
                auto& h = s.fused[static_cast<std::size_t>(sd)];
                h = s.branch_a[static_cast<std::size_t>(sd)];
                h.insert(h.end(), s.branch_b[static_cast<std::size_t>(sd)].begin(), s.branch_b[static_cast<std::size_t>(sd)].end());
            } else {
                s.fused[static_cast<std::size_t>(sd)] = s.branch_a[static_cast<std::size_t>(sd)];
            }
        }
        for (int j = std::max(from, sd); j < L; ++j) {
            apply_linear(mods[static_cast<std::size_t>(j)], s.fused[static_cast<std::size_t>(j)], s.fused[static_cast<std::size_t>(j) + 1]);
            if (j == L - 1) s.ztop = s.fused[static_cast<std::size_t>(j) + 1];
            apply_activation(plan->specs[static_cast<std::size_t>(j)].activation, s.fused[static_cast<std::size_t>(j) + 1]);
        }
        if (sd == L) s.fused[static_cast<std::size_t>(L)] = s.branch_a[static_cast<std::size_t>(sd)];
    }

    void load_example(const Dataset& d, std::size_t row) {
        s.branch_a[0].assign(d.row1(row).begin(), d.row1(row).end());
        if (paired) s.branch_b[0].assign(d.row2(row).begin(), d.row2(row).end());
    }

    const std::vector<double>& output() const { return s.fused[static_cast<std::size_t>(L)]; }

    // Backpropagates dL/dz_top into the gradient accumulators, stopping below
    // layer `lowest` (0-based).
    void backward(std::span<const double> gz_top, int lowest, std::vector<std::vector<double>>& gw,
                  std::vector<std::vector<double>>& gb) {
        const auto& mods = *modules;
        std::vector<double> gz(gz_top.begin(), gz_top.end());
        std::vector<double> gh;
        // Head portion (single stream).
        for (int j = L - 1; j >= sd; --j) {
            const ModuleParams& m = mods[static_cast<std::size_t>(j)];
            const auto& in = s.fused[static_cast<std::size_t>(j)];
            accumulate(m, gz, in, gw[static_cast<std::size_t>(j)], gb[static_cast<std::size_t>(j)]);
            if (j == lowest) return;
            gh.assign(static_cast<std::size_t>(m.input_dim), 0.0);
            for (int r = 0; r < m.output_dim; ++r) {
                const float* row = m.weights.data() + static_cast<std::size_t>(r) * m.input_dim;
                const double g = gz[static_cast<std::size_t>(r)];
                for (int c = 0; c < m.input_dim; ++c) gh[static_cast<std::size_t>(c)] += static_cast<double>(row[c]) * g;
            }
            if (j > sd) {
                gz = std::move(gh);
                activation_backward(plan->specs[static_cast<std::size_t>(j - 1)].activation,
                                    s.fused[static_cast<std::size_t>(j)], gz);
            } else {
                // Split the concat gradient into the two branches.
                const std::size_t half = s.branch_a[static_cast<std::size_t>(sd)].size();
                std::vector<double> ga(gh.begin(), gh.begin() + static_cast<std::ptrdiff_t>(half));
                std::vector<double> gbv(gh.begin() + static_cast<std::ptrdiff_t>(half), gh.end());
                branch_backward(ga, s.branch_a, lowest, gw, gb);
                if (paired) branch_backward(gbv, s.branch_b, lowest, gw, gb);
                return;
            }
        }
        if (sd == L) {
            // Single-stream network: gz currently holds dL/dz of the top layer.
            branch_backward_from_z(gz, s.branch_a, L - 1, lowest, gw, gb);
        }
    }

private:
    void accumulate(const ModuleParams& m, std::span<const double> gz, std::span<const double> in,
                    std::vector<double>& gw, std::vector<double>& gb) {
        for (int r = 0; r < m.output_dim; ++r) {
            const double g = gz[static_cast<std::size_t>(r)];
            double* wrow = gw.data() + static_cast<std::size_t>(r) * m.input_dim;
            for (int c = 0; c < m.input_dim; ++c) wrow[c] += g * in[static_cast<std::size_t>(c)];
            gb[static_cast<std::size_t>(r)] += g;
        }
    }

    // dL/da at the output of shared layer `top` -> descend to `lowest`.
    void branch_backward(std::vector<double>& ga, const std::vector<std::vector<double>>& stream, int lowest,
                         std::vector<std::vector<double>>& gw, std::vector<std::vector<double>>& gb) {
        std::vector<double> gz = std::move(ga);
        activation_backward(plan->specs[static_cast<std::size_t>(sd - 1)].activation, stream[static_cast<std::size_t>(sd)], gz);
        branch_backward_from_z(gz, stream, sd - 1, lowest, gw, gb);
    }

    void branch_backward_from_z(std::vector<double>& gz0, const std::vector<std::vector<double>>& stream, int top,
                                int lowest, std::vector<std::vector<double>>& gw, std::vector<std::vector<double>>& gb) {
        const auto& mods = *modules;
        std::vector<double> gz = std::move(gz0);
        std::vector<double> gh;
        for (int i = top; i >= std::max(lowest, 0); --i) {
            const ModuleParams& m = mods[static_cast<std::size_t>(i)];
            accumulate(m, gz, stream[static_cast<std::size_t>(i)], gw[static_cast<std::size_t>(i)], gb[static_cast<std::size_t>(i)]);
            if (i == lowest || i == 0) break;
            gh.assign(static_cast<std::size_t>(m.input_dim), 0.0);
            for (int r = 0; r < m.output_dim; ++r) {
                const float* row = m.weights.data() + static_cast<std::size_t>(r) * m.input_dim;
                const double g = gz[static_cast<std::size_t>(r)];
                for (int c = 0; c < m.input_dim; ++c) gh[static_cast<std::size_t>(c)] += static_cast<double>(row[c]) * g;
            }
            gz = std::move(gh);
            activation_backward(plan->specs[static_cast<std::size_t>(i - 1)].activation, stream[static_cast<std::size_t>(i)], gz);
        }
    }
};

struct AdamState {
    std::vector<double> mw, vw, mb, vb;
};

}  // namespace

std::vector<double> module_linear(const ModuleParams& m, std::span<const double> in) {
    if (static_cast<int>(in.size()) != m.input_dim) throw std::invalid_argument("module_linear: dimension mismatch");
    std::vector<double> z;
    apply_linear(m, in, z);
    return z;
}

void apply_activation_inplace(Activation act, std::vector<double>& values) { apply_activation(act, values); }

ModuleParams init_module(const LayerSpec& spec, std::uint64_t seed_key) {
    if (spec.input_dim <= 0 || spec.output_dim <= 0) throw std::invalid_argument("init_module: dims must be positive");
    Rng rng(derive_seed(seed_key, "init", static_cast<std::uint64_t>(spec.layer_index)));
    ModuleParams m;
    m.input_dim = spec.input_dim;
    m.output_dim = spec.output_dim;
    m.frozen = false;
    const double bound = std::sqrt(6.0 / spec.input_dim);
    m.weights.resize(static_cast<std::size_t>(spec.input_dim) * spec.output_dim);
    for (float& w : m.weights) w = static_cast<float>(rng.uniform(-bound, bound));
    m.biases.assign(static_cast<std::size_t>(spec.output_dim), 0.0f);
    return m;
}

void NetworkPlan::validate() const {
    if (specs.empty()) throw std::invalid_argument("plan has no layers");
    if (specs.size() != modules.size()) throw std::invalid_argument("specs/modules size mismatch");
    if (shared_depth < 1 || shared_depth > num_layers()) throw std::invalid_argument("bad shared_depth");
    for (int i = 0; i < num_layers(); ++i) {
        const LayerSpec& s = specs[static_cast<std::size_t>(i)];
        const ModuleParams& m = modules[static_cast<std::size_t>(i)];
        if (m.input_dim != s.input_dim || m.output_dim != s.output_dim)
            throw std::invalid_argument("module/spec shape mismatch at layer " + std::to_string(i + 1));
        if (i == 0) continue;
        const int prev_out = specs[static_cast<std::size_t>(i - 1)].output_dim;
        const int expected = (i == shared_depth && paired()) ? 2 * prev_out : prev_out;
        if (s.input_dim != expected) throw std::invalid_argument("shape error: layers do not chain at layer " + std::to_string(i + 1));
    }
}

ForwardTrace forward(const NetworkPlan& plan, std::span<const double> x1, std::span<const double> x2) {
    plan.validate();
    if (static_cast<int>(x1.size()) != plan.specs.front().input_dim)
        throw std::invalid_argument("shape error: input dimension mismatch");
    if (plan.paired() && static_cast<int>(x2.size()) != plan.specs.front().input_dim)
        throw std::invalid_argument("shape error: second input dimension mismatch");

    Runner r;
    r.bind(plan, plan.modules);
    r.s.branch_a[0].assign(x1.begin(), x1.end());
    if (plan.paired()) r.s.branch_b[0].assign(x2.begin(), x2.end());
    r.forward_from(0);

    ForwardTrace t;
    t.layer_inputs_a.resize(static_cast<std::size_t>(plan.num_layers()));
    t.layer_inputs_b.resize(static_cast<std::size_t>(plan.num_layers()));
    for (int i = 0; i < plan.num_layers(); ++i) {
        if (i < plan.shared_depth) {
            t.layer_inputs_a[static_cast<std::size_t>(i)] = r.s.branch_a[static_cast<std::size_t>(i)];
            if (plan.paired()) t.layer_inputs_b[static_cast<std::size_t>(i)] = r.s.branch_b[static_cast<std::size_t>(i)];
        } else {
            t.layer_inputs_a[static_cast<std::size_t>(i)] = r.s.fused[static_cast<std::size_t>(i)];
        }
    }
    t.output = r.output();
    return t;
}

double evaluate_accuracy(const NetworkPlan& plan, const Dataset& data) {
    if (data.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    Runner r;
    r.bind(plan, plan.modules);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.load_example(data, i);
        r.forward_from(0);
        if (head_prediction(r.head(), r.output()) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double dataset_loss(const NetworkPlan& plan, const Dataset& data) {
    Runner r;
    r.bind(plan, plan.modules);
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.load_example(data, i);
        r.forward_from(0);
        total += head_loss(r.head(), r.s.ztop, data.labels[i], nullptr);
    }
    return total / static_cast<double>(data.size());
}

std::vector<std::vector<double>> dataset_gradients(const NetworkPlan& plan, const Dataset& data) {
    Runner r;
    r.bind(plan, plan.modules);
    const int L = plan.num_layers();
    std::vector<std::vector<double>> gw(static_cast<std::size_t>(L)), gb(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        gw[static_cast<std::size_t>(i)].assign(plan.modules[static_cast<std::size_t>(i)].weights.size(), 0.0);
        gb[static_cast<std::size_t>(i)].assign(plan.modules[static_cast<std::size_t>(i)].biases.size(), 0.0);
    }
    std::vector<double> gz;
    for (std::size_t i = 0; i < data.size(); ++i) {
        r.load_example(data, i);
        r.forward_from(0);
        head_loss(r.head(), r.s.ztop, data.labels[i], &gz);
        r.backward(gz, 0, gw, gb);
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    std::vector<std::vector<double>> out(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        auto& dst = out[static_cast<std::size_t>(i)];
        dst.reserve(gw[static_cast<std::size_t>(i)].size() + gb[static_cast<std::size_t>(i)].size());
        for (double g : gw[static_cast<std::size_t>(i)]) dst.push_back(g * inv);
        for (double g : gb[static_cast<std::size_t>(i)]) dst.push_back(g * inv);
    }
    return out;
}

namespace {

// Inputs to layer `depth` for every row of a split, precomputed once so that
// a frozen leading prefix is never re-evaluated during training.
struct SplitCache {
    int depth = 0;
    bool branch = false;  // true: branch pair at a shared layer; false: fused vector
    std::vector<std::vector<double>> a, b;
    const Dataset* data = nullptr;
};

SplitCache make_cache(Runner& r, const Dataset& d, int depth, int sd, bool paired) {
    SplitCache c;
    c.depth = depth;
    c.branch = depth < sd || (!paired && depth <= sd);
    c.data = &d;
    c.a.resize(d.size());
    if (paired && c.branch) c.b.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        r.load_example(d, i);
        if (depth == 0) {
            c.a[i] = r.s.branch_a[0];
            if (paired) c.b[i] = r.s.branch_b[0];
            continue;
        }
        r.forward_from(0);  // cache build is one-time; partial forward not worth specializing
        if (c.branch) {
            c.a[i] = r.s.branch_a[static_cast<std::size_t>(depth)];
            if (paired) c.b[i] = r.s.branch_b[static_cast<std::size_t>(depth)];
        } else {
            c.a[i] = r.s.fused[static_cast<std::size_t>(depth)];
        }
    }
    return c;
}

void runner_seed_from_cache(Runner& r, const SplitCache& c, std::size_t row) {
    if (c.branch) {
        r.s.branch_a[static_cast<std::size_t>(c.depth)] = c.a[row];
        if (r.paired) r.s.branch_b[static_cast<std::size_t>(c.depth)] = c.b[row];
    } else {
        r.s.fused[static_cast<std::size_t>(c.depth)] = c.a[row];
    }
}

double cached_accuracy(Runner& r, const SplitCache& c) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < c.data->size(); ++i) {
        runner_seed_from_cache(r, c, i);
        r.forward_from(c.depth);
        if (head_prediction(r.head(), r.output()) == c.data->labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(c.data->size());
}

struct ValScore {
    double accuracy = 0.0;
    double loss = 0.0;
};

ValScore cached_eval(Runner& r, const SplitCache& c) {
    ValScore s;
    std::size_t correct = 0;
    const Head head = r.head();
    for (std::size_t i = 0; i < c.data->size(); ++i) {
        runner_seed_from_cache(r, c, i);
        r.forward_from(c.depth);
        if (head_prediction(head, r.output()) == c.data->labels[i]) ++correct;
        s.loss += head_loss(head, r.s.ztop, c.data->labels[i], nullptr);
    }
    s.accuracy = static_cast<double>(correct) / static_cast<double>(c.data->size());
    s.loss /= static_cast<double>(c.data->size());
    return s;
}

}  // namespace

TrainOutcome train_and_evaluate(const NetworkPlan& plan, const DataBundle& data, const TrainConfig& cfg) {
    plan.validate();
    if (data.train.empty()) throw std::invalid_argument("train_and_evaluate: training set is empty");
    if (data.val.empty()) throw std::invalid_argument("train_and_evaluate: validation set is empty");
    if (cfg.batch_size <= 0 || cfg.max_epochs <= 0) throw std::invalid_argument("bad train config");

    const int L = plan.num_layers();
    std::vector<ModuleParams> modules = plan.modules;

    int first_trainable = 0;
    while (first_trainable < L && modules[static_cast<std::size_t>(first_trainable)].frozen) ++first_trainable;
    const bool anything_trainable =
        std::any_of(modules.begin(), modules.end(), [](const ModuleParams& m) { return !m.frozen; });

    NetworkPlan work = plan;
    Runner runner;
    runner.bind(work, modules);

    TrainOutcome out;
    out.eval.trained_path = plan.path;

    if (!anything_trainable) {
        // Fully reused path: nothing to train, just measure.
        work.modules = modules;
        out.eval.val_accuracy = evaluate_accuracy(work, data.val);
        out.eval.test_accuracy = evaluate_accuracy(work, data.test);
        out.eval.train_accuracy = evaluate_accuracy(work, data.train);
        out.eval.epochs_run = 0;
        out.modules = std::move(modules);
        return out;
    }

    SplitCache train_cache = make_cache(runner, data.train, first_trainable, plan.shared_depth, plan.paired());
    SplitCache val_cache = make_cache(runner, data.val, first_trainable, plan.shared_depth, plan.paired());
    SplitCache test_cache = make_cache(runner, data.test, first_trainable, plan.shared_depth, plan.paired());

    std::vector<std::vector<double>> gw(static_cast<std::size_t>(L)), gb(static_cast<std::size_t>(L));
    std::vector<AdamState> adam(static_cast<std::size_t>(L));
    for (int i = first_trainable; i < L; ++i) {
        gw[static_cast<std::size_t>(i)].assign(modules[static_cast<std::size_t>(i)].weights.size(), 0.0);
        gb[static_cast<std::size_t>(i)].assign(modules[static_cast<std::size_t>(i)].biases.size(), 0.0);
        if (!modules[static_cast<std::size_t>(i)].frozen) {
            adam[static_cast<std::size_t>(i)].mw.assign(modules[static_cast<std::size_t>(i)].weights.size(), 0.0);
            adam[static_cast<std::size_t>(i)].vw.assign(modules[static_cast<std::size_t>(i)].weights.size(), 0.0);
            adam[static_cast<std::size_t>(i)].mb.assign(modules[static_cast<std::size_t>(i)].biases.size(), 0.0);
            adam[static_cast<std::size_t>(i)].vb.assign(modules[static_cast<std::size_t>(i)].biases.size(), 0.0);
        }
    }

    Rng shuffle_rng(derive_seed(cfg.seed_key, "shuffle"));
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
    long updates = 0, last_improvement = 0;
    // Patience tracks validation loss; the returned snapshot is the best
    // validation accuracy. Loss keeps improving through accuracy plateaus, so
    // stopping on it gives slow-to-align paths their full budget.
    double best_val = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<ModuleParams> best_modules = modules;
    int epochs_run = 0;
    std::vector<double> gz;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        bool out_of_patience = false;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            for (int i = first_trainable; i < L; ++i) {
                std::fill(gw[static_cast<std::size_t>(i)].begin(), gw[static_cast<std::size_t>(i)].end(), 0.0);
                std::fill(gb[static_cast<std::size_t>(i)].begin(), gb[static_cast<std::size_t>(i)].end(), 0.0);
            }
            double batch_loss = 0.0;
            for (std::size_t n = start; n < end; ++n) {
                runner_seed_from_cache(runner, train_cache, order[n]);
                runner.forward_from(first_trainable);
                batch_loss += head_loss(runner.head(), runner.s.ztop, data.train.labels[order[n]], &gz);
                runner.backward(gz, first_trainable, gw, gb);
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream os;
                os << "train_and_evaluate: non-finite loss " << batch_loss << " at epoch " << epoch << ", update "
                   << updates << " (path " << plan.path.signature() << ")";
                throw std::runtime_error(os.str());
            }
            ++updates;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(updates));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(updates));
            for (int i = first_trainable; i < L; ++i) {
                ModuleParams& m = modules[static_cast<std::size_t>(i)];
                if (m.frozen) continue;
                AdamState& st = adam[static_cast<std::size_t>(i)];
                auto step = [&](std::vector<float>& w, std::vector<double>& gacc, std::vector<double>& ms,
                                std::vector<double>& vs) {
                    for (std::size_t j = 0; j < w.size(); ++j) {
                        const double g = gacc[j] * inv;
                        ms[j] = kBeta1 * ms[j] + (1.0 - kBeta1) * g;
                        vs[j] = kBeta2 * vs[j] + (1.0 - kBeta2) * g * g;
                        const double mhat = ms[j] / bc1;
                        const double vhat = vs[j] / bc2;
                        const double wd = static_cast<double>(w[j]);
                        w[j] = static_cast<float>(wd - cfg.learning_rate *
                                                           (mhat / (std::sqrt(vhat) + kAdamEps) + cfg.weight_decay * wd));
                    }
                };
                step(m.weights, gw[static_cast<std::size_t>(i)], st.mw, st.vw);
                step(m.biases, gb[static_cast<std::size_t>(i)], st.mb, st.vb);
            }
            if (updates - last_improvement >= cfg.patience_updates && std::isfinite(best_loss)) {
                out_of_patience = true;
                break;
            }
        }
        epochs_run = epoch;
        const ValScore val = cached_eval(runner, val_cache);
        if (val.accuracy > best_val) {
            best_val = val.accuracy;
            best_modules = modules;
        }
        if (val.loss < best_loss) {
            best_loss = val.loss;
            last_improvement = updates;
        }
        if (out_of_patience || updates - last_improvement >= cfg.patience_updates) break;
    }

    modules = std::move(best_modules);
    out.eval.val_accuracy = cached_accuracy(runner, val_cache);
    out.eval.test_accuracy = cached_accuracy(runner, test_cache);
    out.eval.train_accuracy = cached_accuracy(runner, train_cache);
    out.eval.epochs_run = epochs_run;
    out.modules = std::move(modules);
    return out;
}

}  // namespace picle
