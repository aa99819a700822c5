#include "picle/library.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include <json.hpp>

#include "picle/io.hpp"
#include "picle/rng.hpp"

namespace picle {

static_assert(std::endian::native == std::endian::little, "module files are little-endian");

using Json = nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

std::string module_bytes(const ModuleParams& p) {
    std::string bytes;
    bytes.resize((p.weights.size() + p.biases.size()) * sizeof(float));
    std::memcpy(bytes.data(), p.weights.data(), p.weights.size() * sizeof(float));
    std::memcpy(bytes.data() + p.weights.size() * sizeof(float), p.biases.data(), p.biases.size() * sizeof(float));
    return bytes;
}

Json path_to_json(const Path& path) {
    Json arr = Json::array();
    for (const PathSlot& s : path.slots) {
        Json j;
        if (s.kind == PathSlot::Kind::Reuse) {
            j["kind"] = "reuse";
            j["id"] = s.module_id;
        } else {
            j["kind"] = "new";
            j["spec"] = {{"layer", s.spec.layer_index},
                         {"in", s.spec.input_dim},
                         {"out", s.spec.output_dim},
                         {"activation", to_string(s.spec.activation)},
                         {"shared", s.spec.shared_across_branches}};
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

Path path_from_json(const Json& arr) {
    Path p;
    for (const Json& j : arr) {
        if (j.at("kind") == "reuse") {
            p.slots.push_back(PathSlot::reuse(j.at("id").get<std::string>()));
        } else {
            const Json& s = j.at("spec");
            LayerSpec spec{s.at("layer").get<int>(), s.at("in").get<int>(), s.at("out").get<int>(),
                           activation_from_string(s.at("activation").get<std::string>()), s.at("shared").get<bool>()};
            p.slots.push_back(PathSlot::fresh(spec));
        }
    }
    return p;
}

Json eval_to_json(const EvalResult& e) {
    return Json{{"val_accuracy", e.val_accuracy},
                {"test_accuracy", e.test_accuracy},
                {"train_accuracy", e.train_accuracy},
                {"epochs_run", e.epochs_run},
                {"trained_path", path_to_json(e.trained_path)}};
}

EvalResult eval_from_json(const Json& j) {
    EvalResult e;
    e.val_accuracy = j.at("val_accuracy").get<double>();
    e.test_accuracy = j.at("test_accuracy").get<double>();
    e.train_accuracy = j.at("train_accuracy").get<double>();
    e.epochs_run = j.at("epochs_run").get<int>();
    e.trained_path = path_from_json(j.at("trained_path"));
    return e;
}

}  // namespace

const std::vector<LibraryModule>& Library::modules_at(int layer_index) const {
    if (layer_index < 1 || layer_index > num_layers()) throw std::out_of_range("modules_at: bad layer index");
    return layers_[static_cast<std::size_t>(layer_index - 1)];
}

std::size_t Library::total_modules() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
}

std::vector<const LibraryModule*> Library::compatible_modules(int layer_index, int required_input_dim) const {
    if (layer_index < 1 || layer_index > num_layers()) throw std::out_of_range("compatible_modules: bad layer index");
    std::vector<const LibraryModule*> out;
    for (const LibraryModule& m : layers_[static_cast<std::size_t>(layer_index - 1)])
        if (m.params.input_dim == required_input_dim) out.push_back(&m);
    return out;
}

const LibraryModule* Library::find(const std::string& module_id) const {
    for (const auto& layer : layers_)
        for (const LibraryModule& m : layer)
            if (m.module_id == module_id) return &m;
    return nullptr;
}

const LibraryModule& Library::module(const std::string& module_id) const {
    const LibraryModule* m = find(module_id);
    if (!m) throw std::invalid_argument("unknown module: " + module_id);
    return *m;
}

Path Library::update(const Update& u) {
    const int L = u.trained_path.length();
    if (L == 0 || u.modules.size() != u.trained_path.slots.size() || u.specs.size() != u.trained_path.slots.size())
        throw std::invalid_argument("library update: inconsistent path/modules/specs");
    if (L > num_layers()) throw std::invalid_argument("library update: path longer than architecture");

    Path resolved;
    std::vector<LibraryModule> fresh;
    for (int i = 0; i < L; ++i) {
        const PathSlot& slot = u.trained_path.slots[static_cast<std::size_t>(i)];
        if (slot.kind == PathSlot::Kind::Reuse) {
            const LibraryModule& existing = module(slot.module_id);
            if (existing.layer_index != i + 1) throw std::invalid_argument("library update: module reused at wrong layer");
            resolved.slots.push_back(slot);
            continue;
        }
        LibraryModule m;
        m.module_id = u.problem_id + "_l" + std::to_string(i + 1);
        if (find(m.module_id)) throw std::invalid_argument("library update: duplicate module id " + m.module_id);
        m.layer_index = i + 1;
        m.params = u.modules[static_cast<std::size_t>(i)];
        m.params.frozen = true;
        m.origin_problem = u.problem_id;
        m.origin_solution_index = static_cast<int>(solutions_.size());
        m.origin_train_accuracy = u.eval.train_accuracy;
        m.activation = u.specs[static_cast<std::size_t>(i)].activation;
        m.shared_across_branches = u.specs[static_cast<std::size_t>(i)].shared_across_branches;

        if (auto it = u.fit_samples.find(i + 1); it != u.fit_samples.end() && it->second.size() >= 2) {
            std::vector<std::vector<double>> capped = it->second;
            if (capped.size() > u.fit_cap) capped.resize(u.fit_cap);
            const int v = static_cast<int>(capped.front().size());
            const int k = std::min(u.projection_dim, v);
            const std::uint64_t seed = derive_seed(fnv1a64(u.problem_id), "input_model", static_cast<std::uint64_t>(i + 1));
            m.input_model = fit_input_model(capped, k, seed);
        }
        if (auto it = u.probe_samples.find(i + 1); it != u.probe_samples.end()) m.probe_inputs = it->second;

        resolved.slots.push_back(PathSlot::reuse(m.module_id));
        fresh.push_back(std::move(m));
    }

    for (LibraryModule& m : fresh) layers_[static_cast<std::size_t>(m.layer_index - 1)].push_back(std::move(m));
    solutions_.push_back(Solution{u.problem_id, resolved, u.eval});
    return resolved;
}

NetworkPlan Library::instantiate(const Path& path, int shared_depth, std::uint64_t path_seed) const {
    NetworkPlan plan;
    plan.path = path;
    plan.shared_depth = shared_depth;
    for (int i = 0; i < path.length(); ++i) {
        const PathSlot& slot = path.slots[static_cast<std::size_t>(i)];
        if (slot.kind == PathSlot::Kind::Reuse) {
            const LibraryModule& m = module(slot.module_id);
            if (m.layer_index != i + 1)
                throw std::invalid_argument("instantiate: module " + slot.module_id + " used at wrong layer");
            plan.specs.push_back(m.spec());
            plan.modules.push_back(m.params);
            plan.modules.back().frozen = true;
        } else {
            if (slot.spec.layer_index != i + 1) throw std::invalid_argument("instantiate: bad layer index in spec");
            plan.specs.push_back(slot.spec);
            plan.modules.push_back(init_module(slot.spec, path_seed));
        }
    }
    plan.validate();
    return plan;
}

void Library::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "modules");

    Json meta;
    meta["format_version"] = kFormatVersion;
    meta["num_layers"] = num_layers();
    Json mods = Json::array();
    for (const auto& layer : layers_) {
        for (const LibraryModule& m : layer) {
            const std::string bytes = module_bytes(m.params);
            write_binary_file(dir / "modules" / (m.module_id + ".bin"), bytes);
            Json j;
            j["id"] = m.module_id;
            j["layer"] = m.layer_index;
            j["origin_problem"] = m.origin_problem;
            j["origin_solution_index"] = m.origin_solution_index;
            j["origin_train_accuracy"] = m.origin_train_accuracy;
            j["activation"] = to_string(m.activation);
            j["shared"] = m.shared_across_branches;
            j["input_dim"] = m.params.input_dim;
            j["output_dim"] = m.params.output_dim;
            j["checksum"] = to_hex(fnv1a64(bytes));
            if (m.input_model) {
                j["input_model"] = {{"k", m.input_model->k},
                                    {"v", m.input_model->v},
                                    {"projection", m.input_model->projection},
                                    {"mean", m.input_model->mean},
                                    {"cov", m.input_model->cov}};
            } else {
                j["input_model"] = nullptr;
            }
            j["probe_inputs"] = m.probe_inputs;
            mods.push_back(std::move(j));
        }
    }
    meta["modules"] = std::move(mods);
    write_text_file_atomic(dir / "meta.json", meta.dump(1));

    Json sols = Json::array();
    for (const Solution& s : solutions_) {
        sols.push_back(Json{{"problem_id", s.problem_id}, {"eval", eval_to_json(s.eval)}, {"path", path_to_json(s.path)}});
    }
    write_text_file_atomic(dir / "solutions.json", sols.dump(1));
}

Library Library::load(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "meta.json"))
        throw std::runtime_error("not a library directory (missing meta.json): " + dir.string());
    Json meta = Json::parse(read_text_file(dir / "meta.json"));
    if (meta.at("format_version").get<int>() != kFormatVersion)
        throw std::runtime_error("unsupported library format version");

    Library lib(meta.at("num_layers").get<int>());
    for (const Json& j : meta.at("modules")) {
        LibraryModule m;
        m.module_id = j.at("id").get<std::string>();
        m.layer_index = j.at("layer").get<int>();
        m.origin_problem = j.at("origin_problem").get<std::string>();
        m.origin_solution_index = j.at("origin_solution_index").get<int>();
        m.origin_train_accuracy = j.at("origin_train_accuracy").get<double>();
        m.activation = activation_from_string(j.at("activation").get<std::string>());
        m.shared_across_branches = j.at("shared").get<bool>();
        m.params.input_dim = j.at("input_dim").get<int>();
        m.params.output_dim = j.at("output_dim").get<int>();
        m.params.frozen = true;

        const std::string bytes = read_binary_file(dir / "modules" / (m.module_id + ".bin"));
        const std::size_t n_w = static_cast<std::size_t>(m.params.input_dim) * m.params.output_dim;
        const std::size_t n_b = static_cast<std::size_t>(m.params.output_dim);
        if (bytes.size() != (n_w + n_b) * sizeof(float))
            throw std::runtime_error("corrupt module file (bad size): " + m.module_id);
        if (to_hex(fnv1a64(bytes)) != j.at("checksum").get<std::string>())
            throw std::runtime_error("corrupt module file (checksum mismatch): " + m.module_id);
        m.params.weights.resize(n_w);
        m.params.biases.resize(n_b);
        std::memcpy(m.params.weights.data(), bytes.data(), n_w * sizeof(float));
        std::memcpy(m.params.biases.data(), bytes.data() + n_w * sizeof(float), n_b * sizeof(float));

        if (!j.at("input_model").is_null()) {
            InputModel im;
            const Json& ij = j.at("input_model");
            im.k = ij.at("k").get<int>();
            im.v = ij.at("v").get<int>();
            im.projection = ij.at("projection").get<std::vector<double>>();
            im.mean = ij.at("mean").get<std::vector<double>>();
            im.cov = ij.at("cov").get<std::vector<double>>();
            im.finalize();
            m.input_model = std::move(im);
        }
        m.probe_inputs = j.at("probe_inputs").get<std::vector<std::vector<double>>>();

        if (m.layer_index < 1 || m.layer_index > lib.num_layers())
            throw std::runtime_error("corrupt library: module layer out of range");
        lib.layers_[static_cast<std::size_t>(m.layer_index - 1)].push_back(std::move(m));
    }

    for (const Json& j : Json::parse(read_text_file(dir / "solutions.json"))) {
        Solution s;
        s.problem_id = j.at("problem_id").get<std::string>();
        s.eval = eval_from_json(j.at("eval"));
        s.path = path_from_json(j.at("path"));
        for (const PathSlot& slot : s.path.slots)
            if (slot.kind == PathSlot::Kind::Reuse && !lib.find(slot.module_id))
                throw std::runtime_error("corrupt library: solution references unknown module " + slot.module_id);
        lib.solutions_.push_back(std::move(s));
    }
    return lib;
}

bool Library::same_values(const Library& other) const {
    if (num_layers() != other.num_layers() || solutions_.size() != other.solutions_.size()) return false;
    for (int l = 0; l < num_layers(); ++l) {
        const auto& a = layers_[static_cast<std::size_t>(l)];
        const auto& b = other.layers_[static_cast<std::size_t>(l)];
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const LibraryModule& x = a[i];
            const LibraryModule& y = b[i];
            if (x.module_id != y.module_id || x.layer_index != y.layer_index ||
                x.origin_problem != y.origin_problem || x.origin_solution_index != y.origin_solution_index ||
                x.origin_train_accuracy != y.origin_train_accuracy || x.activation != y.activation ||
                x.shared_across_branches != y.shared_across_branches || !x.params.same_values(y.params) ||
                x.probe_inputs != y.probe_inputs)
                return false;
            if (x.input_model.has_value() != y.input_model.has_value()) return false;
            if (x.input_model && !x.input_model->same_values(*y.input_model)) return false;
        }
    }
    for (std::size_t i = 0; i < solutions_.size(); ++i) {
        const Solution& x = solutions_[i];
        const Solution& y = other.solutions_[i];
        if (x.problem_id != y.problem_id || x.path.signature() != y.path.signature() ||
            x.eval.val_accuracy != y.eval.val_accuracy || x.eval.test_accuracy != y.eval.test_accuracy ||
            x.eval.train_accuracy != y.eval.train_accuracy || x.eval.epochs_run != y.eval.epochs_run ||
            x.eval.trained_path.signature() != y.eval.trained_path.signature())
            return false;
    }
    return true;
}

}  // namespace picle
