#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace picle {

enum class ProblemKind {
    compositional,  // pair input, binary label
    pretext,        // single input, multi-class label
};

inline std::string to_string(ProblemKind k) { return k == ProblemKind::compositional ? "compositional" : "pretext"; }

inline ProblemKind problem_kind_from_string(const std::string& s) {
    if (s == "compositional") return ProblemKind::compositional;
    if (s == "pretext") return ProblemKind::pretext;
    throw std::invalid_argument("unknown problem kind: " + s);
}

/// Flat row-major sample storage. `x2` stays empty for single-input problems.
struct Dataset {
    int input_dim = 0;
    bool paired = true;
    std::vector<double> x1;
    std::vector<double> x2;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }

    std::span<const double> row1(std::size_t i) const {
        return {x1.data() + i * static_cast<std::size_t>(input_dim), static_cast<std::size_t>(input_dim)};
    }
    std::span<const double> row2(std::size_t i) const {
        if (!paired) return {};
        return {x2.data() + i * static_cast<std::size_t>(input_dim), static_cast<std::size_t>(input_dim)};
    }

    void push_row(std::span<const double> a, std::span<const double> b, int label) {
        x1.insert(x1.end(), a.begin(), a.end());
        if (paired) x2.insert(x2.end(), b.begin(), b.end());
        labels.push_back(label);
    }
};

struct DataBundle {
    std::string problem_id;
    ProblemKind kind = ProblemKind::compositional;
    int input_dim = 0;
    Dataset train;
    Dataset val;
    Dataset test;
};

}  // namespace picle
