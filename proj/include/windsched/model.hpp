#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "windsched/rng.hpp"
#include "windsched/tensor.hpp"

namespace windsched {

struct EncoderConfig {
    int n_layers = 3;
    int hidden_dim = 128;
    int n_heads = 8;
    // Attention logits divide by sqrt(hidden_dim) as printed in the source
    // formulation; set true to use the per-head key dimension instead.
    bool scale_by_key_dim = false;
    bool residual = false;  // adds H^(l) to the integrated output when on

    int key_dim() const { return hidden_dim / n_heads; }
    void check() const {
        if (n_layers < 1) throw std::invalid_argument("encoder: n_layers must be >= 1");
        if (n_heads < 1 || hidden_dim % n_heads != 0)
            throw std::invalid_argument("encoder: hidden_dim must be divisible by n_heads");
    }
};

struct DecoderConfig {
    double logit_scale = 1.0;      // multiplies the tanh pointer logits
    bool idle_transparent = false; // idle picks neither charge nor move the crew
};

/// All learnable state plus the architecture hyperparameters needed to
/// rebuild the forward pass from a checkpoint.
struct Model {
    EncoderConfig encoder;
    DecoderConfig decoder;
    int n_locations = 0;  // J; input one-hot covers {0..J}
    ParameterStore params;

    int input_dim() const { return 2 + n_locations; }  // cost + one-hot(J+1)
};

namespace detail {

inline std::vector<double> uniform_init(Rng& rng, size_t n, double bound) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return v;
}

}  // namespace detail

/// Creates all parameters. Weight matrices start uniform on
/// [-1/sqrt(D), 1/sqrt(D)], biases at zero.
inline Model init_model(const EncoderConfig& enc, const DecoderConfig& dec, int n_locations,
                        uint64_t seed) {
    enc.check();
    if (n_locations < 1) throw std::invalid_argument("init_model: n_locations must be >= 1");
    Model m;
    m.encoder = enc;
    m.decoder = dec;
    m.n_locations = n_locations;

    Rng rng(seed);
    const int D = enc.hidden_dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(D));
    auto weight = [&](const std::string& name, int rows, int cols) {
        m.params.create(name, rows, cols, detail::uniform_init(rng, static_cast<size_t>(rows) * cols, bound));
    };

    weight("embed.w", m.input_dim(), D);
    m.params.create("embed.b", 1, D, std::vector<double>(D, 0.0));
    for (int l = 0; l < enc.n_layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        weight(p + "spatial.wq", D, D);
        weight(p + "spatial.wk", D, D);
        weight(p + "spatial.wv", D, D);
        weight(p + "temporal.wq", D, D);
        weight(p + "temporal.wk", D, D);
        weight(p + "temporal.wv", D, D);
        weight(p + "integrate.w", 2 * D, D);
    }
    weight("dec.context.wq", 2 * D, D);
    weight("dec.context.wk", D, D);
    weight("dec.context.wv", D, D);
    weight("dec.pointer.w", D, D);
    weight("dec.placeholder", 1, D);
    return m;
}

inline nlohmann::json model_meta_json(const Model& m) {
    nlohmann::json j;
    j["schema"] = "windsched.model";
    j["version"] = 1;
    j["encoder"] = {{"n_layers", m.encoder.n_layers},
                    {"hidden_dim", m.encoder.hidden_dim},
                    {"n_heads", m.encoder.n_heads},
                    {"scale_by_key_dim", m.encoder.scale_by_key_dim},
                    {"residual", m.encoder.residual}};
    j["decoder"] = {{"logit_scale", m.decoder.logit_scale},
                    {"idle_transparent", m.decoder.idle_transparent}};
    j["n_locations"] = m.n_locations;
    return j;
}

inline void save_model(const Model& m, const std::string& path, bool include_optimizer = true) {
    m.params.save(path, model_meta_json(m).dump(), include_optimizer);
}

inline Model load_model(const std::string& path, nlohmann::json* meta_out = nullptr) {
    Model m;
    const std::string meta = m.params.load(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("bad model metadata: " + std::string(e.what()));
    }
    if (meta_out) *meta_out = j;
    if (!j.contains("schema") || j["schema"] != "windsched.model")
        throw std::runtime_error("checkpoint is not a windsched model");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("unsupported model version");
    const auto& e = j.at("encoder");
    m.encoder.n_layers = e.at("n_layers").get<int>();
    m.encoder.hidden_dim = e.at("hidden_dim").get<int>();
    m.encoder.n_heads = e.at("n_heads").get<int>();
    m.encoder.scale_by_key_dim = e.at("scale_by_key_dim").get<bool>();
    m.encoder.residual = e.at("residual").get<bool>();
    const auto& d = j.at("decoder");
    m.decoder.logit_scale = d.at("logit_scale").get<double>();
    m.decoder.idle_transparent = d.at("idle_transparent").get<bool>();
    m.n_locations = j.at("n_locations").get<int>();
    m.encoder.check();
    return m;
}

}  // namespace windsched
