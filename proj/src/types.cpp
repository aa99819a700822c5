#include "picle/types.hpp"

#include <sstream>

namespace picle {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softmax: return "softmax";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    throw std::logic_error("unknown activation");
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "softmax") return Activation::softmax;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation: " + s);
}

std::string LayerSpec::signature() const {
    std::ostringstream os;
    os << input_dim << "->" << output_dim << ":" << to_string(activation) << (shared_across_branches ? ":s" : "");
    return os.str();
}

void ArchTemplate::validate() const {
    if (layers.empty()) throw std::invalid_argument("template has no layers");
    if (shared_depth < 1 || shared_depth > num_layers()) throw std::invalid_argument("bad shared_depth");
    for (int i = 0; i < num_layers(); ++i) {
        const LayerSpec& s = layers[static_cast<std::size_t>(i)];
        if (s.layer_index != i + 1) throw std::invalid_argument("layer_index must be consecutive from 1");
        if (s.input_dim <= 0 || s.output_dim <= 0) throw std::invalid_argument("layer dims must be positive");
        if (s.shared_across_branches != (i < shared_depth)) throw std::invalid_argument("shared flags disagree with shared_depth");
        if (i == 0) continue;
        const int prev_out = layers[static_cast<std::size_t>(i - 1)].output_dim;
        const int expected = (i == shared_depth && paired()) ? 2 * prev_out : prev_out;
        if (s.input_dim != expected) throw std::invalid_argument("layer dims do not chain at layer " + std::to_string(i + 1));
    }
}

ArchTemplate make_comp_template(int num_layers, int input_dim, int width, int num_classes) {
    if (num_layers < 4) throw std::invalid_argument("compositional template needs >= 4 layers");
    const int head_layers = num_layers <= 6 ? 2 : 3;
    const int encoder_layers = num_layers - head_layers;
    ArchTemplate t;
    t.shared_depth = encoder_layers;
    for (int i = 1; i <= num_layers; ++i) {
        LayerSpec s;
        s.layer_index = i;
        s.shared_across_branches = i <= encoder_layers;
        if (i == 1) {
            s.input_dim = input_dim;
            s.output_dim = encoder_layers == 1 ? num_classes : width;
        } else if (i < encoder_layers) {
            s.input_dim = width;
            s.output_dim = width;
        } else if (i == encoder_layers) {
            s.input_dim = width;
            s.output_dim = num_classes;
        } else if (i == encoder_layers + 1) {
            s.input_dim = 2 * num_classes;
            s.output_dim = num_layers == i ? 1 : width;
        } else {
            s.input_dim = width;
            s.output_dim = i == num_layers ? 1 : width;
        }
        s.activation = i == encoder_layers ? Activation::softmax
                     : i == num_layers    ? Activation::sigmoid
                                          : Activation::relu;
        t.layers.push_back(s);
    }
    t.validate();
    return t;
}

ArchTemplate make_pretext_template(int num_layers, int input_dim, int width, int num_classes) {
    ArchTemplate t;
    t.shared_depth = num_layers;
    for (int i = 1; i <= num_layers; ++i) {
        LayerSpec s;
        s.layer_index = i;
        s.shared_across_branches = true;
        s.input_dim = i == 1 ? input_dim : width;
        s.output_dim = i == num_layers ? num_classes : width;
        s.activation = i == num_layers ? Activation::softmax : Activation::relu;
        t.layers.push_back(s);
    }
    t.validate();
    return t;
}

std::string Path::signature() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (i) os << '|';
        if (slots[i].kind == PathSlot::Kind::Reuse)
            os << "reuse[" << slots[i].module_id << "]";
        else
            os << "new[" << slots[i].spec.signature() << "]";
    }
    return os.str();
}

int Path::reused_prefix_len() const {
    int n = 0;
    while (n < length() && slots[static_cast<std::size_t>(n)].kind == PathSlot::Kind::Reuse) ++n;
    return n;
}

int Path::reused_suffix_len() const {
    int n = 0;
    while (n < length() && slots[static_cast<std::size_t>(length() - 1 - n)].kind == PathSlot::Kind::Reuse) ++n;
    return n;
}

Path all_new_path(const ArchTemplate& tmpl) {
    Path p;
    for (const LayerSpec& s : tmpl.layers) p.slots.push_back(PathSlot::fresh(s));
    return p;
}

}  // namespace picle
