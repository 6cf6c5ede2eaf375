#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "nci/common.hpp"
#include "nci/optimizer.hpp"
#include "nci/tape.hpp"
#include "nci/tensor.hpp"

namespace nci {

enum class Activation { linear, relu, tanh_fn, sigmoid_fn };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::tanh_fn: return "tanh";
        case Activation::sigmoid_fn: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "sigmoid") return Activation::sigmoid_fn;
    throw ValueError("unknown activation '" + s + "'");
}

struct Layer {
    Tensor W;  // [in, out]
    Tensor b;  // [out]
    Activation act = Activation::linear;
};

struct ModelParams {
    std::string name;
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().W.shape[0]; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().W.shape[1]; }
};

// Fully connected net: dims = {in, h1, ..., out}, one activation per layer.
// Weights are Glorot-uniform from a per-layer derived seed, biases zero.
inline ModelParams make_mlp(const std::string& name, const std::vector<std::size_t>& dims,
                            const std::vector<Activation>& acts, std::uint64_t seed) {
    if (dims.size() < 2) throw ConfigError("make_mlp '" + name + "': need at least input and output dims");
    if (acts.size() != dims.size() - 1)
        throw ConfigError("make_mlp '" + name + "': " + std::to_string(acts.size()) + " activations for " +
                          std::to_string(dims.size() - 1) + " layers");
    ModelParams m;
    m.name = name;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.W = glorot_uniform(dims[l], dims[l + 1], derive_seed(seed, name + "/W", l));
        layer.b = Tensor({dims[l + 1]});
        layer.act = acts[l];
        m.layers.push_back(std::move(layer));
    }
    return m;
}

inline std::vector<Tensor*> param_ptrs(ModelParams& m) {
    std::vector<Tensor*> out;
    for (Layer& l : m.layers) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

inline std::vector<const Tensor*> param_cptrs(const ModelParams& m) {
    std::vector<const Tensor*> out;
    for (const Layer& l : m.layers) {
        out.push_back(&l.W);
        out.push_back(&l.b);
    }
    return out;
}

// Builds the model's forward pass on a tape. Parameter leaf ids are appended
// to param_ids in param_ptrs order so gradients can be read back after
// backward().
inline int tape_forward(Tape& t, const ModelParams& m, int x, std::vector<int>* param_ids = nullptr) {
    int h = x;
    for (const Layer& l : m.layers) {
        const int w = t.leaf(l.W);
        const int b = t.leaf(l.b);
        if (param_ids) {
            param_ids->push_back(w);
            param_ids->push_back(b);
        }
        h = t.add(t.matmul(h, w), b);
        switch (l.act) {
            case Activation::linear: break;
            case Activation::relu: h = t.relu(h); break;
            case Activation::tanh_fn: h = t.tanh_fn(h); break;
            case Activation::sigmoid_fn: h = t.sigmoid_fn(h); break;
        }
    }
    return h;
}

// Tape-free forward pass for evaluation. Same arithmetic as the tape ops.
inline Tensor forward(const ModelParams& m, const Tensor& X) {
    if (X.rank() != 2) throw ShapeError("forward expects rank-2 input, got " + X.shape_str());
    Tensor h = X;
    for (const Layer& l : m.layers) {
        const std::size_t N = h.shape[0], K = h.shape[1], M = l.W.shape[1];
        if (K != l.W.shape[0])
            throw ShapeError("forward: input dim " + std::to_string(K) + " does not match layer dim " +
                             std::to_string(l.W.shape[0]));
        Tensor out({N, M});
        for (std::size_t i = 0; i < N; ++i) {
            const double* hrow = &h.data[i * K];
            double* orow = &out.data[i * M];
            for (std::size_t j = 0; j < M; ++j) orow[j] = l.b.data[j];
            for (std::size_t k = 0; k < K; ++k) {
                const double hv = hrow[k];
                if (hv == 0.0) continue;
                const double* wrow = &l.W.data[k * M];
                for (std::size_t j = 0; j < M; ++j) orow[j] += hv * wrow[j];
            }
        }
        switch (l.act) {
            case Activation::linear: break;
            case Activation::relu:
                for (double& v : out.data) v = v > 0.0 ? v : 0.0;
                break;
            case Activation::tanh_fn:
                for (double& v : out.data) v = std::tanh(v);
                break;
            case Activation::sigmoid_fn:
                for (double& v : out.data) v = stable_sigmoid(v);
                break;
        }
        h = std::move(out);
    }
    return h;
}

inline int argmax_row(const Tensor& logits, std::size_t row) {
    const std::size_t C = logits.shape[1];
    int best = 0;
    for (std::size_t c = 1; c < C; ++c)
        if (logits.data[row * C + c] > logits.data[row * C + best]) best = static_cast<int>(c);
    return best;
}

struct ClassifierOptions {
    std::size_t hidden = 32;
    std::size_t epochs = 40;
    std::size_t batch_size = 128;
    double lr = 0.01;
};

// Small reusable supervised trainer: one hidden relu layer, linear logits,
// Adam, mean softmax cross-entropy. Deterministic for a fixed seed.
inline ModelParams fit_classifier(const Tensor& X, const std::vector<int>& y, std::size_t num_classes,
                                  const ClassifierOptions& opts, std::uint64_t seed) {
    if (X.rank() != 2 || X.shape[0] != y.size()) throw ShapeError("fit_classifier: X rows must match labels");
    if (X.shape[0] == 0) throw ValueError("fit_classifier: empty training set");
    const std::size_t N = X.shape[0], D = X.shape[1];
    ModelParams model = make_mlp("classifier", {D, opts.hidden, num_classes},
                                 {Activation::relu, Activation::linear}, derive_seed(seed, "classifier/init"));
    OptimizerState opt;
    opt.init({OptKind::adam, opts.lr}, param_cptrs(model));
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(seed, "classifier/shuffle", epoch));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < N; start += opts.batch_size) {
            const std::size_t bsz = std::min(opts.batch_size, N - start);
            Tensor xb({bsz, D});
            std::vector<int> yb(bsz);
            for (std::size_t i = 0; i < bsz; ++i) {
                const std::size_t src = order[start + i];
                std::copy_n(&X.data[src * D], D, &xb.data[i * D]);
                yb[i] = y[src];
            }
            Tape tape;
            std::vector<int> pids;
            const int xnode = tape.leaf(std::move(xb));
            const int logits = tape_forward(tape, model, xnode, &pids);
            const int loss = tape.softmax_xent(logits, yb);
            tape.backward(loss);
            std::vector<const Tensor*> grads;
            for (int id : pids) grads.push_back(&tape.grad(id));
            opt.step(param_ptrs(model), grads, model.name);
        }
    }
    return model;
}

inline double classifier_accuracy(const ModelParams& model, const Tensor& X, const std::vector<int>& y) {
    if (X.shape[0] == 0) throw ValueError("classifier_accuracy: empty evaluation set");
    const Tensor logits = forward(model, X);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < X.shape[0]; ++i)
        if (argmax_row(logits, i) == y[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(X.shape[0]);
}

// ---- checkpoint serialization ------------------------------------------------
//
// Structured text header describing every layer, then one parameter per line
// at %.17g (lossless for IEEE doubles). Order: per model, per layer, W
// row-major then b.

inline void save_models(std::ostream& os, const std::vector<const ModelParams*>& models,
                        const std::string& config_hash) {
    os << "nci-checkpoint v1\n";
    os << "config_hash = " << config_hash << "\n";
    os << "models = " << models.size() << "\n";
    for (const ModelParams* m : models) {
        os << "model " << m->name << " layers=" << m->layers.size() << "\n";
        for (std::size_t l = 0; l < m->layers.size(); ++l) {
            const Layer& layer = m->layers[l];
            os << "layer " << l << " in=" << layer.W.shape[0] << " out=" << layer.W.shape[1]
               << " act=" << activation_name(layer.act) << "\n";
        }
    }
    os << "end-header\n";
    for (const ModelParams* m : models)
        for (const Layer& layer : m->layers) {
            for (double v : layer.W.data) os << format_g17(v) << "\n";
            for (double v : layer.b.data) os << format_g17(v) << "\n";
        }
}

struct Checkpoint {
    std::string config_hash;
    std::vector<ModelParams> models;

    const ModelParams& model(const std::string& name) const {
        for (const ModelParams& m : models)
            if (m.name == name) return m;
        throw ValueError("checkpoint has no model named '" + name + "'");
    }
};

inline Checkpoint load_models(std::istream& is) {
    Checkpoint ck;
    std::string line;
    if (!std::getline(is, line) || line != "nci-checkpoint v1")
        throw ValueError("not a checkpoint: bad magic line");
    if (!std::getline(is, line) || line.rfind("config_hash = ", 0) != 0)
        throw ValueError("checkpoint: missing config_hash");
    ck.config_hash = line.substr(14);
    if (!std::getline(is, line) || line.rfind("models = ", 0) != 0)
        throw ValueError("checkpoint: missing model count");
    const std::size_t count = std::stoul(line.substr(9));
    for (std::size_t mi = 0; mi < count; ++mi) {
        if (!std::getline(is, line) || line.rfind("model ", 0) != 0)
            throw ValueError("checkpoint: expected model line");
        std::istringstream ls(line.substr(6));
        ModelParams m;
        std::string layers_field;
        ls >> m.name >> layers_field;
        if (layers_field.rfind("layers=", 0) != 0) throw ValueError("checkpoint: malformed model line");
        const std::size_t nlayers = std::stoul(layers_field.substr(7));
        for (std::size_t l = 0; l < nlayers; ++l) {
            if (!std::getline(is, line) || line.rfind("layer ", 0) != 0)
                throw ValueError("checkpoint: expected layer line");
            std::istringstream lls(line.substr(6));
            std::size_t idx;
            std::string in_f, out_f, act_f;
            lls >> idx >> in_f >> out_f >> act_f;
            if (in_f.rfind("in=", 0) != 0 || out_f.rfind("out=", 0) != 0 || act_f.rfind("act=", 0) != 0)
                throw ValueError("checkpoint: malformed layer line");
            Layer layer;
            layer.W = Tensor({std::stoul(in_f.substr(3)), std::stoul(out_f.substr(4))});
            layer.b = Tensor({layer.W.shape[1]});
            layer.act = activation_from_name(act_f.substr(4));
            m.layers.push_back(std::move(layer));
        }
        ck.models.push_back(std::move(m));
    }
    if (!std::getline(is, line) || line != "end-header") throw ValueError("checkpoint: missing end-header");
    for (ModelParams& m : ck.models)
        for (Layer& layer : m.layers) {
            for (double& v : layer.W.data)
                if (!(is >> v)) throw ValueError("checkpoint: truncated parameter body");
            for (double& v : layer.b.data)
                if (!(is >> v)) throw ValueError("checkpoint: truncated parameter body");
        }
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<const ModelParams*>& models,
                            const std::string& config_hash) {
    std::ofstream os(path);
    if (!os) throw ValueError("cannot open checkpoint for writing: " + path.string());
    save_models(os, models, config_hash);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ValueError("cannot open checkpoint: " + path.string());
    return load_models(is);
}

}  // namespace nci
