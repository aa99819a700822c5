#include "picle/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace picle {

namespace {

std::uint64_t domain_seed(int domain_id) { return derive_seed(fnv1a64("picle-domain"), "id", static_cast<std::uint64_t>(domain_id)); }

// Fixed class -> coordinate maps; the first is the identity order.
constexpr std::array<std::array<int, kClassCount>, 4> kRelabels{{
    {1, 2, 3, 4, 5, 6, 7, 8},
    {5, 3, 8, 1, 7, 2, 6, 4},
    {2, 6, 1, 5, 8, 4, 7, 3},
    {7, 4, 2, 8, 3, 6, 1, 5},
}};

// The four grid patterns are fixed balanced pseudo-random boolean matrices.
// Structured patterns (stripes, quadrants, checkerboards) turn out to be
// recoverable from a strict subset of cells by a small head network, which
// erases the gap the cell-restricted datasets are meant to create; unstructured
// grids keep unseen cells genuinely unpredictable.
std::array<std::array<int, kClassCount>, kClassCount> make_grid(int g2_id) {
    constexpr std::array<int, 4> kPositives{32, 30, 34, 28};
    std::vector<int> cells(64, 0);
    for (int i = 0; i < kPositives[static_cast<std::size_t>(g2_id - 1)]; ++i) cells[static_cast<std::size_t>(i)] = 1;
    Rng rng(derive_seed(fnv1a64("picle-grid"), "g2", static_cast<std::uint64_t>(g2_id)));
    rng.shuffle(cells);
    std::array<std::array<int, kClassCount>, kClassCount> grid{};
    for (int r = 0; r < kClassCount; ++r)
        for (int c = 0; c < kClassCount; ++c) grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = cells[static_cast<std::size_t>(r * kClassCount + c)];
    return grid;
}

}  // namespace

DomainSpec make_domain(int domain_id) {
    if (domain_id < 1) throw std::invalid_argument("domain_id must be >= 1");
    DomainSpec d;
    d.domain_id = domain_id;
    d.seed = domain_seed(domain_id);
    Rng rng(derive_seed(d.seed, "centers"));
    const double min_dist = 4.0 * d.noise_scale;
    // Each domain occupies its own region (a seeded offset), and within it
    // the centers sit on a sphere whose radius keeps every pair only a
    // little above the separation floor, so the lower task is learnable but
    // not trivial from a handful of samples per class.
    const double radius = 3.0 * d.noise_scale;
    std::vector<double> offset(static_cast<std::size_t>(d.latent_dim));
    for (double& x : offset) x = rng.uniform(-0.8, 0.8);
    d.centers.resize(static_cast<std::size_t>(d.class_count));
    for (int c = 0; c < d.class_count; ++c) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) throw std::runtime_error("domain centers: separation unsatisfiable");
            std::vector<double> center(static_cast<std::size_t>(d.latent_dim));
            double norm2 = 0.0;
            for (double& x : center) {
                x = rng.normal();
                norm2 += x * x;
            }
            const double scale = radius / std::sqrt(norm2);
            for (double& x : center) x *= scale;
            bool ok = true;
            for (int p = 0; p < c && ok; ++p) {
                double dist2 = 0.0;
                for (int i = 0; i < d.latent_dim; ++i) {
                    const double diff = center[static_cast<std::size_t>(i)] - d.centers[static_cast<std::size_t>(p)][static_cast<std::size_t>(i)];
                    dist2 += diff * diff;
                }
                ok = dist2 >= min_dist * min_dist;
            }
            if (ok) {
                d.centers[static_cast<std::size_t>(c)] = std::move(center);
                break;
            }
        }
    }
    for (auto& center : d.centers)
        for (int i = 0; i < d.latent_dim; ++i) center[static_cast<std::size_t>(i)] += offset[static_cast<std::size_t>(i)];
    return d;
}

DomainSpec make_scrambled_domain(int domain_id) {
    DomainSpec d = make_domain(domain_id);
    d.scrambled = true;
    d.input_dim = 2 * d.latent_dim;
    d.scramble.resize(static_cast<std::size_t>(d.input_dim) * d.latent_dim);
    Rng rng(derive_seed(d.seed, "scramble"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.latent_dim));
    for (double& x : d.scramble) x = rng.normal() * scale;
    return d;
}

int classify(const DomainSpec& d, std::span<const double> latent) {
    int best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < d.class_count; ++c) {
        double dist = 0.0;
        for (int i = 0; i < d.latent_dim; ++i) {
            const double diff = latent[static_cast<std::size_t>(i)] - d.centers[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
            dist += diff * diff;
        }
        if (dist < best_dist) {
            best_dist = dist;
            best = c;
        }
    }
    return best;
}

std::vector<double> sample_latent(const DomainSpec& d, int cls, Rng& rng) {
    if (cls < 0 || cls >= d.class_count) throw std::invalid_argument("sample_latent: bad class");
    for (;;) {
        std::vector<double> z = d.centers[static_cast<std::size_t>(cls)];
        for (double& x : z) x += d.noise_scale * rng.normal();
        if (classify(d, z) == cls) return z;
    }
}

std::vector<double> latent_to_input(const DomainSpec& d, std::span<const double> latent) {
    if (!d.scrambled) return std::vector<double>(latent.begin(), latent.end());
    std::vector<double> x(static_cast<std::size_t>(d.input_dim), 0.0);
    for (int r = 0; r < d.input_dim; ++r) {
        const double* row = d.scramble.data() + static_cast<std::size_t>(r) * d.latent_dim;
        double acc = 0.0;
        for (int c = 0; c < d.latent_dim; ++c) acc += row[c] * latent[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = acc;
    }
    return x;
}

int UpperTask::positive_cells() const {
    int n = 0;
    for (const auto& row : grid)
        for (int v : row) n += v;
    return n;
}

UpperTask make_upper_task(int g_id) {
    if (g_id < 1 || g_id > kNumUpperTasks) throw std::invalid_argument("g_id must be in [1, 16]");
    UpperTask g;
    g.g_id = g_id;
    g.g2_id = (g_id - 1) / 4 + 1;
    g.g1_id = (g_id - 1) % 4 + 1;
    g.relabel = kRelabels[static_cast<std::size_t>(g.g1_id - 1)];
    g.grid = make_grid(g.g2_id);
    const int pos = g.positive_cells();
    if (pos < 24 || pos > 40) throw std::logic_error("upper task grid out of balance");
    return g;
}

namespace {

struct InputPool {
    // Latent samples grouped by class; empty pool means unrestricted draws.
    std::vector<std::vector<std::vector<double>>> by_class;
    bool limited = false;
};

InputPool build_pool(const DomainSpec& domain, int unique_inputs, const std::vector<int>& needed_classes, Rng& rng) {
    InputPool pool;
    if (unique_inputs < 0) return pool;
    if (unique_inputs < static_cast<int>(needed_classes.size()))
        throw std::invalid_argument("triple infeasible: unique inputs cannot cover the required classes");
    pool.limited = true;
    pool.by_class.resize(static_cast<std::size_t>(domain.class_count));
    for (int u = 0; u < unique_inputs; ++u) {
        const int cls = needed_classes[static_cast<std::size_t>(u) % needed_classes.size()];
        pool.by_class[static_cast<std::size_t>(cls)].push_back(sample_latent(domain, cls, rng));
    }
    return pool;
}

std::vector<double> draw_latent(const DomainSpec& domain, const InputPool& pool, int cls, Rng& rng) {
    if (!pool.limited) return sample_latent(domain, cls, rng);
    const auto& bucket = pool.by_class[static_cast<std::size_t>(cls)];
    if (bucket.empty()) throw std::logic_error("input pool missing class");
    return bucket[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(bucket.size())))];
}

Dataset generate_split(const ProblemSpec& spec, const SizeTriple& triple, std::uint64_t split_seed) {
    if (triple.count <= 0) throw std::invalid_argument("triple infeasible: count must be positive");
    const DomainSpec& domain = spec.domain;
    Rng rng(split_seed);

    Dataset out;
    out.input_dim = domain.input_dim;
    out.paired = spec.kind == ProblemKind::compositional;

    if (spec.kind == ProblemKind::pretext) {
        std::vector<int> needed(static_cast<std::size_t>(domain.class_count));
        std::iota(needed.begin(), needed.end(), 0);
        const InputPool pool = build_pool(domain, triple.unique_inputs, needed, rng);
        std::vector<int> classes(static_cast<std::size_t>(triple.count));
        for (int r = 0; r < triple.count; ++r) classes[static_cast<std::size_t>(r)] = r % domain.class_count;
        rng.shuffle(classes);
        for (int cls : classes) {
            const std::vector<double> z = draw_latent(domain, pool, cls, rng);
            const std::vector<double> x = latent_to_input(domain, z);
            out.push_row(x, {}, cls);
        }
        return out;
    }

    if (!spec.upper) throw std::invalid_argument("compositional problem without an upper task");
    const int total_cells = domain.class_count * domain.class_count;
    if (triple.cells == 0 || triple.cells > total_cells) throw std::invalid_argument("triple infeasible: bad cell count");

    std::vector<int> cells(static_cast<std::size_t>(total_cells));
    std::iota(cells.begin(), cells.end(), 0);
    if (triple.cells > 0) {
        rng.shuffle(cells);
        cells.resize(static_cast<std::size_t>(triple.cells));
    }

    std::vector<int> needed_set;
    {
        std::set<int> s;
        for (int cell : cells) {
            s.insert(cell / domain.class_count);
            s.insert(cell % domain.class_count);
        }
        needed_set.assign(s.begin(), s.end());
    }
    const InputPool pool = build_pool(domain, triple.unique_inputs, needed_set, rng);

    // Cycle over the allowed cells so each one is represented, then shuffle.
    std::vector<int> row_cells(static_cast<std::size_t>(triple.count));
    for (int r = 0; r < triple.count; ++r) row_cells[static_cast<std::size_t>(r)] = cells[static_cast<std::size_t>(r) % cells.size()];
    rng.shuffle(row_cells);

    for (int cell : row_cells) {
        const int c1 = cell / domain.class_count;
        const int c2 = cell % domain.class_count;
        const std::vector<double> z1 = draw_latent(domain, pool, c1, rng);
        const std::vector<double> z2 = draw_latent(domain, pool, c2, rng);
        out.push_row(latent_to_input(domain, z1), latent_to_input(domain, z2), spec.upper->label(c1, c2));
    }
    return out;
}

}  // namespace

DataBundle generate_problem(const ProblemSpec& spec) {
    DataBundle b;
    b.problem_id = spec.problem_id;
    b.kind = spec.kind;
    b.input_dim = spec.domain.input_dim;
    b.train = generate_split(spec, spec.train_triple, derive_seed(spec.seed, "train"));
    b.val = generate_split(spec, spec.val_triple, derive_seed(spec.seed, "val"));
    b.test = generate_split(spec, spec.test_triple, derive_seed(spec.seed, "test"));
    return b;
}

std::string to_string(SeqPattern p) {
    switch (p) {
        case SeqPattern::s_pl: return "S_pl";
        case SeqPattern::s_minus: return "S_minus";
        case SeqPattern::s_out: return "S_out";
        case SeqPattern::s_out_star: return "S_out_star";
        case SeqPattern::s_out_2star: return "S_out_2star";
        case SeqPattern::s_in: return "S_in";
        case SeqPattern::s_sp: return "S_sp";
        case SeqPattern::s_few: return "S_few";
        case SeqPattern::s_plus: return "S_plus";
        case SeqPattern::s_long: return "S_long";
    }
    throw std::logic_error("unknown pattern");
}

SeqPattern pattern_from_string(const std::string& s) {
    for (SeqPattern p : {SeqPattern::s_pl, SeqPattern::s_minus, SeqPattern::s_out, SeqPattern::s_out_star,
                         SeqPattern::s_out_2star, SeqPattern::s_in, SeqPattern::s_sp, SeqPattern::s_few,
                         SeqPattern::s_plus, SeqPattern::s_long})
        if (to_string(p) == s) return p;
    throw std::invalid_argument("unknown sequence pattern: " + s);
}

namespace {

struct SequenceBuilder {
    const SequenceSpec& seq;
    Rng rng;
    std::vector<int> domain_order;  // ids 1..9 in seeded order, drawn without replacement
    std::vector<int> g_order;       // ids 1..16
    std::size_t next_domain = 0;
    std::size_t next_g = 0;
    std::vector<ProblemSpec> specs;

    explicit SequenceBuilder(const SequenceSpec& s) : seq(s), rng(derive_seed(s.seed, "realize")) {
        domain_order.resize(kNumDomains);
        std::iota(domain_order.begin(), domain_order.end(), 1);
        rng.shuffle(domain_order);
        g_order.resize(kNumUpperTasks);
        std::iota(g_order.begin(), g_order.end(), 1);
        rng.shuffle(g_order);
    }

    int fresh_domain() {
        if (next_domain >= domain_order.size()) throw std::invalid_argument("sequence needs more domains than available");
        return domain_order[next_domain++];
    }
    int fresh_g() {
        if (next_g >= g_order.size()) throw std::invalid_argument("sequence needs more upper tasks than available");
        return g_order[next_g++];
    }

    void add(ProblemKind kind, int domain_id, std::optional<int> g_id, SizeTriple train_triple, bool scrambled = false) {
        ProblemSpec p;
        p.problem_id = "p" + std::string(specs.size() + 1 < 10 ? "0" : "") + std::to_string(specs.size() + 1);
        p.kind = kind;
        p.domain = scrambled ? make_scrambled_domain(domain_id) : make_domain(domain_id);
        if (g_id) p.upper = make_upper_task(*g_id);
        p.train_triple = train_triple;
        if (train_triple.count == kTripleFewShot.count && train_triple.cells == kTripleFewShot.cells)
            p.val_triple = kTripleFewShot;
        p.seed = derive_seed(seq.seed, "problem", static_cast<std::uint64_t>(specs.size() + 1));
        specs.push_back(std::move(p));
    }
};

}  // namespace

RealizedSequence realize_sequence(const SequenceSpec& seq) {
    const int len = seq.length;
    if (len < 1) throw std::invalid_argument("sequence length must be positive");
    SequenceBuilder b(seq);
    const SizeTriple perc = kTripleMinusPerceptual;
    const SizeTriple lat = kTripleMinusLatent;
    const SizeTriple plus = kTriplePlus;

    auto fill_middle = [&](int count, SizeTriple triple) {
        for (int i = 0; i < count; ++i) b.add(ProblemKind::compositional, b.fresh_domain(), b.fresh_g(), triple);
    };

    switch (seq.pattern) {
        case SeqPattern::s_pl: {
            fill_middle(len, plus);
            break;
        }
        case SeqPattern::s_minus: {
            if (len < 2) throw std::invalid_argument("S_minus needs length >= 2");
            const int d1 = b.fresh_domain();
            const int g1 = b.fresh_g();
            b.add(ProblemKind::compositional, d1, g1, plus);
            fill_middle(len - 2, perc);
            b.add(ProblemKind::compositional, d1, g1, perc);
            break;
        }
        case SeqPattern::s_out: {
            if (len < 2) throw std::invalid_argument("S_out needs length >= 2");
            const int d1 = b.fresh_domain();
            b.add(ProblemKind::compositional, d1, b.fresh_g(), plus);
            fill_middle(len - 2, perc);
            b.add(ProblemKind::compositional, d1, b.fresh_g(), perc);
            break;
        }
        case SeqPattern::s_out_star: {
            if (len < 3) throw std::invalid_argument("S_out_star needs length >= 3");
            const int d1 = b.fresh_domain();
            b.add(ProblemKind::compositional, d1, b.fresh_g(), perc);
            b.add(ProblemKind::compositional, d1, b.fresh_g(), plus);
            fill_middle(len - 3, perc);
            b.add(ProblemKind::compositional, d1, b.fresh_g(), perc);
            break;
        }
        case SeqPattern::s_out_2star: {
            if (len < 3) throw std::invalid_argument("S_out_2star needs length >= 3");
            const int d1 = b.fresh_domain();
            const int g1 = b.fresh_g();
            b.add(ProblemKind::compositional, d1, g1, perc);
            b.add(ProblemKind::compositional, d1, b.fresh_g(), plus);
            fill_middle(len - 3, perc);
            b.add(ProblemKind::compositional, d1, g1, perc);
            break;
        }
        case SeqPattern::s_in:
        case SeqPattern::s_sp: {
            if (len < 2) throw std::invalid_argument("latent sequences need length >= 2");
            const int g1 = b.fresh_g();
            b.add(ProblemKind::compositional, b.fresh_domain(), g1, plus);
            for (int i = 0; i < len - 2; ++i) b.add(ProblemKind::compositional, b.fresh_domain(), b.fresh_g(), lat);
            b.add(ProblemKind::compositional, b.fresh_domain(), g1, lat, seq.pattern == SeqPattern::s_sp);
            break;
        }
        case SeqPattern::s_few: {
            if (len < 4) throw std::invalid_argument("S_few needs length >= 4");
            const int d1 = b.fresh_domain();
            const int d2 = b.fresh_domain();
            b.add(ProblemKind::pretext, d1, std::nullopt, plus);
            b.add(ProblemKind::pretext, d2, std::nullopt, plus);
            const int g_shared = b.fresh_g();
            // Middle problems: one reuses the first pretext domain with the
            // shared upper task, the rest are fresh distractors.
            const int middle = len - 3;
            for (int i = 0; i < middle; ++i) {
                if (i == middle / 2)
                    b.add(ProblemKind::compositional, d1, g_shared, perc);
                else
                    b.add(ProblemKind::compositional, b.fresh_domain(), b.fresh_g(), perc);
            }
            b.add(ProblemKind::compositional, d2, g_shared, kTripleFewShot);
            break;
        }
        case SeqPattern::s_plus: {
            if (len < 2) throw std::invalid_argument("S_plus needs length >= 2");
            const int d1 = b.fresh_domain();
            const int g1 = b.fresh_g();
            b.add(ProblemKind::compositional, d1, g1, perc);
            fill_middle(len - 2, perc);
            b.add(ProblemKind::compositional, d1, g1, plus);
            break;
        }
        case SeqPattern::s_long: {
            Rng size_rng(derive_seed(seq.seed, "long_sizes"));
            const int plus_cap = len * 5 / 6;
            for (int t = 0; t < len; ++t) {
                const int domain_id = 1 + size_rng.uniform_int(kNumDomains);
                const int g_id = 1 + size_rng.uniform_int(kNumUpperTasks);
                SizeTriple triple;
                if (size_rng.uniform() < 0.1) {
                    triple = kTripleFewShot;
                } else if (t < plus_cap && size_rng.uniform() < 1.0 / 3.0) {
                    triple = plus;
                } else {
                    triple = size_rng.uniform() < 0.5 ? perc : lat;
                }
                b.add(ProblemKind::compositional, domain_id, g_id, triple);
            }
            break;
        }
    }

    RealizedSequence out;
    out.spec = seq;
    for (ProblemSpec& p : b.specs) {
        RealizedProblem rp;
        rp.data = generate_problem(p);
        rp.spec = std::move(p);
        out.problems.push_back(std::move(rp));
    }
    check_pattern(out);
    return out;
}

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::logic_error("pattern check failed: " + msg);
}

bool same_problem_ingredients(const ProblemSpec& a, const ProblemSpec& b) {
    const bool same_g = (!a.upper && !b.upper) || (a.upper && b.upper && a.upper->g_id == b.upper->g_id);
    return a.domain.domain_id == b.domain.domain_id && same_g;
}

}  // namespace

void check_pattern(const RealizedSequence& seq) {
    const auto& ps = seq.problems;
    const std::size_t n = ps.size();
    require(n == static_cast<std::size_t>(seq.spec.length), "length mismatch");
    auto domain_of = [&](std::size_t i) { return ps[i].spec.domain.domain_id; };
    auto g_of = [&](std::size_t i) { return ps[i].spec.upper ? ps[i].spec.upper->g_id : 0; };
    auto is_plus = [&](std::size_t i) { return ps[i].spec.train_triple.count == kTriplePlus.count; };
    auto distinct_domains = [&](std::size_t lo, std::size_t hi) {
        std::set<int> s;
        for (std::size_t i = lo; i < hi; ++i) s.insert(domain_of(i));
        return s.size() == hi - lo;
    };

    switch (seq.spec.pattern) {
        case SeqPattern::s_pl: {
            require(distinct_domains(0, n), "S_pl domains must be distinct");
            for (std::size_t i = 0; i < n; ++i) require(is_plus(i), "S_pl problems must be plentiful");
            break;
        }
        case SeqPattern::s_minus: {
            require(same_problem_ingredients(ps.front().spec, ps.back().spec), "S_minus endpoints must match");
            require(is_plus(0) && !is_plus(n - 1), "S_minus sizes");
            require(distinct_domains(0, n - 1), "S_minus middles must be fresh");
            break;
        }
        case SeqPattern::s_out: {
            require(domain_of(0) == domain_of(n - 1), "S_out must share the first domain");
            require(g_of(0) != g_of(n - 1), "S_out last upper task must be new");
            require(is_plus(0) && !is_plus(n - 1), "S_out sizes");
            require(distinct_domains(0, n - 1), "S_out middles must be fresh");
            break;
        }
        case SeqPattern::s_out_star: {
            require(domain_of(0) == domain_of(1) && domain_of(0) == domain_of(n - 1), "S_out_star domain sharing");
            require(g_of(0) != g_of(n - 1) && g_of(1) != g_of(n - 1), "S_out_star last upper task must be new");
            require(!is_plus(0) && is_plus(1) && !is_plus(n - 1), "S_out_star sizes");
            break;
        }
        case SeqPattern::s_out_2star: {
            require(domain_of(0) == domain_of(1) && domain_of(0) == domain_of(n - 1), "S_out_2star domain sharing");
            require(g_of(0) == g_of(n - 1) && g_of(1) != g_of(0), "S_out_2star endpoints must match");
            require(!is_plus(0) && is_plus(1) && !is_plus(n - 1), "S_out_2star sizes");
            break;
        }
        case SeqPattern::s_in:
        case SeqPattern::s_sp: {
            require(g_of(0) == g_of(n - 1), "latent sequences share the first upper task");
            require(distinct_domains(0, n), "latent sequences use fresh domains everywhere");
            require(is_plus(0) && !is_plus(n - 1), "latent sequence sizes");
            require(ps.back().spec.domain.scrambled == (seq.spec.pattern == SeqPattern::s_sp), "input space variant");
            break;
        }
        case SeqPattern::s_few: {
            require(ps[0].spec.kind == ProblemKind::pretext && ps[1].spec.kind == ProblemKind::pretext,
                    "S_few starts with two pretext problems");
            require(ps.back().spec.train_triple.count == kTripleFewShot.count, "S_few ends few-shot");
            require(domain_of(n - 1) == domain_of(1), "S_few last domain comes from the second pretext problem");
            bool found_source = false;
            for (std::size_t i = 2; i + 1 < n; ++i)
                if (g_of(i) == g_of(n - 1)) {
                    require(domain_of(i) == domain_of(0), "S_few upper-task source must reuse the first domain");
                    found_source = true;
                }
            require(found_source, "S_few needs a middle problem sharing the last upper task");
            break;
        }
        case SeqPattern::s_plus: {
            require(same_problem_ingredients(ps.front().spec, ps.back().spec), "S_plus endpoints must match");
            require(!is_plus(0) && is_plus(n - 1), "S_plus sizes");
            break;
        }
        case SeqPattern::s_long:
            break;  // sampled with replacement; nothing structural to verify
    }
}

MetricsReport compute_metrics(const std::vector<double>& initial_accuracies,
                              const std::vector<double>& final_accuracies,
                              std::optional<double> sa_reference_last) {
    if (initial_accuracies.size() != final_accuracies.size() || final_accuracies.empty())
        throw std::invalid_argument("compute_metrics: accuracy vectors must be nonempty and aligned");
    MetricsReport r;
    r.initial_accuracies = initial_accuracies;
    r.final_accuracies = final_accuracies;
    const double n = static_cast<double>(final_accuracies.size());
    r.average_accuracy = std::accumulate(final_accuracies.begin(), final_accuracies.end(), 0.0) / n;
    double f = 0.0;
    for (std::size_t i = 0; i < final_accuracies.size(); ++i) f += final_accuracies[i] - initial_accuracies[i];
    r.forgetting = f / n;
    if (sa_reference_last) r.transfer_last = final_accuracies.back() - *sa_reference_last;
    return r;
}

}  // namespace picle
