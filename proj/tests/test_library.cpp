#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "picle/io.hpp"
#include "picle/library.hpp"
#include "picle/mat.hpp"
#include "picle/rng.hpp"

using namespace picle;
namespace fs = std::filesystem;

namespace {

ArchTemplate small_template() {
    ArchTemplate t;
    t.layers = {{1, 4, 6, Activation::relu, true}, {2, 6, 6, Activation::relu, true}, {3, 6, 2, Activation::softmax, true}};
    t.shared_depth = 3;
    t.validate();
    return t;
}

std::vector<std::vector<double>> random_samples(int n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : out)
        for (double& v : row) v = rng.normal();
    return out;
}

Library::Update synthetic_update(const ArchTemplate& tmpl, const std::string& problem_id, double train_acc,
                                 std::uint64_t seed) {
    Library::Update u;
    u.problem_id = problem_id;
    u.trained_path = all_new_path(tmpl);
    u.specs = tmpl.layers;
    for (const LayerSpec& s : tmpl.layers) u.modules.push_back(init_module(s, seed));
    u.eval.train_accuracy = train_acc;
    u.eval.val_accuracy = train_acc;
    u.eval.test_accuracy = train_acc;
    u.eval.trained_path = u.trained_path;
    for (int layer = 1; layer <= tmpl.num_layers(); ++layer)
        u.fit_samples[layer] =
            random_samples(40, tmpl.layers[static_cast<std::size_t>(layer - 1)].input_dim, seed + static_cast<std::uint64_t>(layer));
    u.probe_samples[2] = random_samples(10, tmpl.layers[1].input_dim, seed + 99);
    u.projection_dim = 4;
    return u;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("picle_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("first problem adds one module per layer and one solution") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    const Path resolved = lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    CHECK(lib.total_modules() == 3u);
    CHECK(lib.solutions().size() == 1u);
    CHECK(resolved.reused_prefix_len() == 3);
    for (int layer = 1; layer <= 3; ++layer) {
        REQUIRE(lib.modules_at(layer).size() == 1u);
        const LibraryModule& m = lib.modules_at(layer).front();
        CHECK(m.params.frozen);
        CHECK(m.origin_problem == "p01");
        CHECK(m.origin_train_accuracy == doctest::Approx(0.9));
        CHECK(m.input_model.has_value());
    }
    CHECK(lib.modules_at(2).front().probe_inputs.size() == 10u);
    CHECK(lib.modules_at(1).front().probe_inputs.empty());
}

TEST_CASE("all-reuse paths grow only the solution list") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    const Path first = lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    Library::Update u;
    u.problem_id = "p02";
    u.trained_path = first;
    u.specs = tmpl.layers;
    for (const PathSlot& s : first.slots) u.modules.push_back(lib.module(s.module_id).params);
    u.eval.trained_path = first;
    lib.update(u);
    CHECK(lib.total_modules() == 3u);
    CHECK(lib.solutions().size() == 2u);
}

TEST_CASE("input model density at the fitting-sample mean equals the mode density") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    const auto u = synthetic_update(tmpl, "p01", 0.9, 11);
    const auto samples = u.fit_samples.at(1);
    lib.update(u);
    const InputModel& model = *lib.modules_at(1).front().input_model;

    std::vector<double> mean(samples.front().size(), 0.0);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
    for (double& v : mean) v /= static_cast<double>(samples.size());

    // Independent mode density from the stored covariance.
    Mat sigma(model.k, model.k);
    sigma.a = model.cov;
    const double logdet = log_det_from_cholesky(cholesky(sigma));
    const double expected = -0.5 * (model.k * std::log(2.0 * M_PI) + logdet);
    CHECK(log_density(model, mean) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("compatible_modules filters by input dimension") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    CHECK(lib.compatible_modules(1, 4).empty());
    lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    CHECK(lib.compatible_modules(1, 4).size() == 1u);
    CHECK(lib.compatible_modules(1, 8).empty());  // changed input space
    CHECK(lib.compatible_modules(2, 6).size() == 1u);
}

TEST_CASE("library round-trips losslessly through save and load") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    lib.update(synthetic_update(tmpl, "p01", 0.91, 7));
    lib.update(synthetic_update(tmpl, "p02", 0.85, 8));
    // Third problem reuses layer 1 of p01 and introduces the rest.
    Library::Update u3 = synthetic_update(tmpl, "p03", 0.99, 9);
    u3.trained_path.slots[0] = PathSlot::reuse("p01_l1");
    u3.modules[0] = lib.module("p01_l1").params;
    u3.fit_samples.erase(1);
    lib.update(u3);

    TempDir dir;
    lib.save(dir.path);
    const Library loaded = Library::load(dir.path);
    CHECK(loaded.same_values(lib));
    CHECK(loaded.solutions().size() == 3u);
    CHECK(loaded.total_modules() == 8u);
}

TEST_CASE("loading a directory that was never saved fails") {
    TempDir dir;
    CHECK_THROWS_AS(Library::load(dir.path / "nothing_here"), std::runtime_error);
}

TEST_CASE("a format version bump is rejected") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    TempDir dir;
    lib.save(dir.path);
    std::string meta = read_text_file(dir.path / "meta.json");
    const auto pos = meta.find("\"format_version\": 1");
    REQUIRE(pos != std::string::npos);
    meta.replace(pos, 19, "\"format_version\": 9");
    write_text_file(dir.path / "meta.json", meta);
    CHECK_THROWS_WITH_AS(Library::load(dir.path), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("a flipped byte in a module file is detected") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    TempDir dir;
    lib.save(dir.path);

    const fs::path victim = dir.path / "modules" / "p01_l2.bin";
    std::string bytes = read_binary_file(victim);
    bytes[5] = static_cast<char>(bytes[5] ^ 0x10);
    write_binary_file(victim, bytes);
    CHECK_THROWS_WITH_AS(Library::load(dir.path), doctest::Contains("checksum"), std::runtime_error);
}

TEST_CASE("instantiate resolves reuse and seeds fresh modules deterministically") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    lib.update(synthetic_update(tmpl, "p01", 0.9, 7));

    Path mixed;
    mixed.slots.push_back(PathSlot::reuse("p01_l1"));
    mixed.slots.push_back(PathSlot::fresh(tmpl.layers[1]));
    mixed.slots.push_back(PathSlot::fresh(tmpl.layers[2]));

    const NetworkPlan a = lib.instantiate(mixed, tmpl.shared_depth, 555);
    const NetworkPlan b = lib.instantiate(mixed, tmpl.shared_depth, 555);
    const NetworkPlan c = lib.instantiate(mixed, tmpl.shared_depth, 556);
    CHECK(a.modules[0].frozen);
    CHECK_FALSE(a.modules[1].frozen);
    CHECK(a.modules[1].same_values(b.modules[1]));
    bool differs = false;
    for (std::size_t i = 0; i < a.modules[1].weights.size(); ++i)
        differs = differs || a.modules[1].weights[i] != c.modules[1].weights[i];
    CHECK(differs);
}

TEST_CASE("append-only bookkeeping holds across updates") {
    const ArchTemplate tmpl = small_template();
    Library lib(3);
    lib.update(synthetic_update(tmpl, "p01", 0.9, 7));
    const std::vector<float> before = lib.module("p01_l1").params.weights;
    lib.update(synthetic_update(tmpl, "p02", 0.8, 8));
    CHECK(lib.module("p01_l1").params.weights == before);
    CHECK(lib.solutions().size() == 2u);
    CHECK(lib.modules_at(1).size() == 2u);
}
