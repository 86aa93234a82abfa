#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "windsched/decoder.hpp"
#include "windsched/encoder.hpp"
#include "windsched/instance.hpp"
#include "windsched/model.hpp"
#include "windsched/oracle.hpp"

namespace windsched {

struct TrainConfig {
    int epochs = 20;
    int instances_per_epoch = 2000;
    int batch_size = 32;
    double learning_rate = 1e-4;
    std::string baseline = "rollout";  // none | rollout | greedy
    int n_baseline_rollouts = 8;
    uint64_t seed = 1;
    GeneratorConfig gen = generator_preset("desk-a");
    EncoderConfig encoder;
    DecoderConfig decoder;
    int n_validation = 100;
    int oracle_ceiling = 10;
    double oracle_time_limit = 60.0;  // per validation instance
    int checkpoint_every = 1;         // epochs; 0 disables periodic checkpoints
    std::string out_dir;              // empty = keep everything in memory

    void check() const {
        if (epochs < 0 || instances_per_epoch <= 0 || batch_size <= 0 || learning_rate <= 0)
            throw std::invalid_argument("train config: counts and learning rate must be positive");
        if (batch_size > instances_per_epoch)
            throw std::invalid_argument("train config: batch_size exceeds instances_per_epoch");
        if (baseline != "none" && baseline != "rollout" && baseline != "greedy")
            throw std::invalid_argument("train config: unknown baseline mode " + baseline);
        if (baseline == "rollout" && n_baseline_rollouts < 1)
            throw std::invalid_argument("train config: n_baseline_rollouts must be >= 1");
    }
};

/// Training presets. desk-case-* run end to end on a laptop-class CPU;
/// paper-case-* mirror the published configuration (100 epochs x 25,600
/// instances on D=128) and are not desk-runnable.
inline TrainConfig train_preset(const std::string& name) {
    TrainConfig c;
    auto desk_model = [&c]() {
        c.encoder.n_layers = 2;
        c.encoder.hidden_dim = 32;
        c.encoder.n_heads = 4;
    };
    if (name == "desk-case-a") {
        c.gen = generator_preset("desk-a");
        desk_model();
    } else if (name == "desk-case-b") {
        c.gen = generator_preset("desk-b");
        desk_model();
    } else if (name == "desk-case-c") {
        c.gen = generator_preset("desk-c");
        desk_model();
    } else if (name.rfind("paper-case", 0) == 0 && name.size() == 11) {
        c.gen = generator_preset("case" + name.substr(10));
        c.epochs = 100;
        c.instances_per_epoch = 25600;
    } else {
        throw std::invalid_argument("unknown train preset: " + name);
    }
    return c;
}

namespace detail {

// Stream tags for per-item seed derivation. Every random draw in training is
// keyed by (seed, stream, index) so trajectories replay exactly.
inline constexpr uint64_t kStreamTrainInstance = 11;
inline constexpr uint64_t kStreamRolloutRng = 12;
inline constexpr uint64_t kStreamBaselineRng = 13;
inline constexpr uint64_t kStreamValInstance = 14;

inline Instance train_instance(const TrainConfig& cfg, int epoch, int index) {
    GeneratorConfig g = cfg.gen;
    g.seed = derive_seed(cfg.seed, kStreamTrainInstance,
                         static_cast<uint64_t>(epoch) * 1000003ULL + static_cast<uint64_t>(index));
    return generate(g);
}

}  // namespace detail

/// Mean sequence cost over n independently sampled rollouts, gradients off.
inline double rollout_baseline(const Model& model, const FeatureSet& fs, const EncodeResult& enc,
                               int n_rollouts, Rng& rng) {
    if (n_rollouts < 1) throw std::invalid_argument("rollout_baseline: need at least one rollout");
    NoGradGuard ng;
    double total = 0.0;
    for (int r = 0; r < n_rollouts; ++r)
        total += decode(model, fs, enc, DecodeMode::sample, rng).sequence_reward;
    return total / n_rollouts;
}

struct BatchStats {
    double mean_cost = 0;
    double mean_baseline = 0;
    double grad_norm = 0;
    int skipped = 0;  // instances dropped for non-finite loss
};

/// One REINFORCE accumulation over a batch: sample a rollout per instance,
/// estimate the baseline, and add (L - b)/B * grad log p into the parameter
/// gradients. Gradients are zeroed first and left ready for an Adam step.
inline BatchStats reinforce_batch(Model& model, const TrainConfig& cfg,
                                  const std::vector<Instance>& batch, int epoch,
                                  int first_index) {
    model.params.zero_grad();
    BatchStats stats;
    const int B = static_cast<int>(batch.size());
    int used = 0;
    for (int b = 0; b < B; ++b) {
        const uint64_t idx =
            static_cast<uint64_t>(epoch) * 1000003ULL + static_cast<uint64_t>(first_index + b);
        const FeatureSet fs = normalize(featurize(batch[b]));

        Tensor logp;
        double cost = 0, baseline = 0;
        try {
            const EncodeResult enc = encode(model, fs);
            Rng sample_rng(derive_seed(cfg.seed, detail::kStreamRolloutRng, idx));
            const DecodeResult roll = decode(model, fs, enc, DecodeMode::sample, sample_rng);
            cost = roll.sequence_reward;
            logp = roll.logp;

            if (cfg.baseline == "rollout") {
                Rng base_rng(derive_seed(cfg.seed, detail::kStreamBaselineRng, idx));
                baseline = rollout_baseline(model, fs, enc, cfg.n_baseline_rollouts, base_rng);
            } else if (cfg.baseline == "greedy") {
                NoGradGuard ng;
                Rng unused(0);
                baseline = decode(model, fs, enc, DecodeMode::greedy, unused).sequence_reward;
            }
        } catch (const std::exception& e) {
            ++stats.skipped;
            std::fprintf(stderr, "[train] skipping instance %llu: %s\n",
                         static_cast<unsigned long long>(idx), e.what());
            continue;
        }

        if (!std::isfinite(cost) || !std::isfinite(baseline) || !std::isfinite(logp.value())) {
            ++stats.skipped;
            std::fprintf(stderr, "[train] skipping instance %llu: non-finite loss\n",
                         static_cast<unsigned long long>(idx));
            continue;
        }
        ++used;
        stats.mean_cost += cost;
        stats.mean_baseline += baseline;
        backward(scale(logp, (cost - baseline) / B));
    }
    if (used > 0) {
        stats.mean_cost /= used;
        stats.mean_baseline /= used;
    }
    stats.grad_norm = model.params.grad_norm();
    return stats;
}

struct BatchLogRow {
    int epoch = 0;
    int batch = 0;
    double mean_cost = 0;
    double mean_baseline = 0;
    double grad_norm = 0;
    int skipped = 0;
};

struct EpochLogRow {
    int epoch = 0;  // 0 = before any update
    bool has_gap = false;
    double val_gap_percent = 0;
    double val_mean_cost = 0;  // greedy sequence cost on the validation set
    double wall_seconds = 0;
};

struct TrainLog {
    std::vector<BatchLogRow> batches;
    std::vector<EpochLogRow> epochs;
    int adam_steps_skipped = 0;
};

struct TrainResult {
    Model model;
    TrainLog log;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ValidationSet {
    std::vector<Instance> instances;
    std::vector<FeatureSet> features;
    std::vector<std::optional<double>> exact_eq11;  // nullopt when oracle skipped
};

inline ValidationSet make_validation_set(const TrainConfig& cfg) {
    ValidationSet val;
    for (int i = 0; i < cfg.n_validation; ++i) {
        GeneratorConfig g = cfg.gen;
        g.seed = derive_seed(cfg.seed, kStreamValInstance, static_cast<uint64_t>(i));
        val.instances.push_back(generate(g));
        val.features.push_back(normalize(featurize(val.instances.back())));
        std::optional<double> opt;
        if (val.instances.back().n_turbines <= cfg.oracle_ceiling) {
            ExactOptions eo;
            eo.time_limit_seconds = cfg.oracle_time_limit;
            eo.turbine_ceiling = cfg.oracle_ceiling;
            const ExactResult ex = solve_exact(val.instances.back(), eo);
            if (ex.proved) opt = ex.eq11_value;
        }
        val.exact_eq11.push_back(opt);
    }
    return val;
}

inline EpochLogRow validate_epoch(const Model& model, const ValidationSet& val, int epoch) {
    NoGradGuard ng;
    EpochLogRow row;
    row.epoch = epoch;
    double gap_sum = 0, cost_sum = 0;
    int gap_n = 0;
    for (size_t i = 0; i < val.instances.size(); ++i) {
        const EncodeResult enc = encode(model, val.features[i]);
        Rng unused(0);
        const DecodeResult dec = decode(model, val.features[i], enc, DecodeMode::greedy, unused);
        cost_sum += dec.sequence_reward;
        if (val.exact_eq11[i]) {
            const double model_eq11 = evaluate_eq11(val.instances[i], dec.schedule).eq11_value;
            gap_sum += (model_eq11 - *val.exact_eq11[i]) / *val.exact_eq11[i] * 100.0;
            ++gap_n;
        }
    }
    if (!val.instances.empty()) row.val_mean_cost = cost_sum / val.instances.size();
    if (gap_n > 0) {
        row.has_gap = true;
        row.val_gap_percent = gap_sum / gap_n;
    }
    return row;
}

inline void write_train_logs(const TrainConfig& cfg, const TrainLog& log) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.out_dir);
    {
        std::ofstream f(dir / "train_log.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write train_log.csv");
        f << "epoch,batch,mean_cost,mean_baseline,grad_norm,skipped\n";
        for (const auto& r : log.batches)
            f << r.epoch << ',' << r.batch << ',' << fmt_double(r.mean_cost) << ','
              << fmt_double(r.mean_baseline) << ',' << fmt_double(r.grad_norm) << ',' << r.skipped
              << '\n';
    }
    {
        std::ofstream f(dir / "val_log.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write val_log.csv");
        f << "epoch,val_mean_cost,val_gap_percent\n";
        for (const auto& r : log.epochs) {
            f << r.epoch << ',' << fmt_double(r.val_mean_cost) << ',';
            if (r.has_gap) f << fmt_double(r.val_gap_percent);
            f << '\n';
        }
    }
    {
        // Wall-clock lives in its own file so the loss CSVs stay
        // byte-reproducible across runs.
        std::ofstream f(dir / "timing.csv", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write timing.csv");
        f << "epoch,wall_seconds\n";
        for (const auto& r : log.epochs) f << r.epoch << ',' << fmt_double(r.wall_seconds) << '\n';
    }
}

}  // namespace detail

inline nlohmann::json generator_config_to_json(const GeneratorConfig& g) {
    return nlohmann::json{{"seed", g.seed},
                          {"n_turbines", g.n_turbines},
                          {"n_periods", g.n_periods},
                          {"capacity", g.capacity},
                          {"n_locations", g.n_locations},
                          {"n_scenarios", g.n_scenarios},
                          {"price_low", g.price_low},
                          {"price_high", g.price_high},
                          {"production_low", g.production_low},
                          {"production_high", g.production_high},
                          {"base_cost_low", g.base_cost_low},
                          {"base_cost_high", g.base_cost_high},
                          {"cost_slope_low", g.cost_slope_low},
                          {"cost_slope_high", g.cost_slope_high},
                          {"visit_cost_low", g.visit_cost_low},
                          {"visit_cost_high", g.visit_cost_high},
                          {"failure_mu_low_frac", g.failure_mu_low_frac},
                          {"failure_mu_high_frac", g.failure_mu_high_frac},
                          {"failure_sigma_frac", g.failure_sigma_frac},
                          {"failure_cost_multiplier", g.failure_cost_multiplier}};
}

inline GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    GeneratorConfig g;
    if (j.contains("preset")) g = generator_preset(j["preset"].get<std::string>());
    auto opt = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    opt("seed", g.seed);
    opt("n_turbines", g.n_turbines);
    opt("n_periods", g.n_periods);
    opt("capacity", g.capacity);
    opt("n_locations", g.n_locations);
    opt("n_scenarios", g.n_scenarios);
    opt("price_low", g.price_low);
    opt("price_high", g.price_high);
    opt("production_low", g.production_low);
    opt("production_high", g.production_high);
    opt("base_cost_low", g.base_cost_low);
    opt("base_cost_high", g.base_cost_high);
    opt("cost_slope_low", g.cost_slope_low);
    opt("cost_slope_high", g.cost_slope_high);
    opt("visit_cost_low", g.visit_cost_low);
    opt("visit_cost_high", g.visit_cost_high);
    opt("failure_mu_low_frac", g.failure_mu_low_frac);
    opt("failure_mu_high_frac", g.failure_mu_high_frac);
    opt("failure_sigma_frac", g.failure_sigma_frac);
    opt("failure_cost_multiplier", g.failure_cost_multiplier);
    return g;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j;
    j["epochs"] = c.epochs;
    j["instances_per_epoch"] = c.instances_per_epoch;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["baseline"] = c.baseline;
    j["n_baseline_rollouts"] = c.n_baseline_rollouts;
    j["seed"] = c.seed;
    j["gen"] = generator_config_to_json(c.gen);
    j["encoder"] = {{"n_layers", c.encoder.n_layers},
                    {"hidden_dim", c.encoder.hidden_dim},
                    {"n_heads", c.encoder.n_heads},
                    {"scale_by_key_dim", c.encoder.scale_by_key_dim},
                    {"residual", c.encoder.residual}};
    j["decoder"] = {{"logit_scale", c.decoder.logit_scale},
                    {"idle_transparent", c.decoder.idle_transparent}};
    j["n_validation"] = c.n_validation;
    j["oracle_ceiling"] = c.oracle_ceiling;
    j["oracle_time_limit"] = c.oracle_time_limit;
    j["checkpoint_every"] = c.checkpoint_every;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("preset")) c = train_preset(j["preset"].get<std::string>());
    auto opt = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    opt("epochs", c.epochs);
    opt("instances_per_epoch", c.instances_per_epoch);
    opt("batch_size", c.batch_size);
    opt("learning_rate", c.learning_rate);
    opt("baseline", c.baseline);
    opt("n_baseline_rollouts", c.n_baseline_rollouts);
    opt("seed", c.seed);
    if (j.contains("gen")) c.gen = generator_config_from_json(j["gen"]);
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        auto opte = [&e](const char* key, auto& field) {
            if (e.contains(key)) field = e[key].get<std::decay_t<decltype(field)>>();
        };
        opte("n_layers", c.encoder.n_layers);
        opte("hidden_dim", c.encoder.hidden_dim);
        opte("n_heads", c.encoder.n_heads);
        opte("scale_by_key_dim", c.encoder.scale_by_key_dim);
        opte("residual", c.encoder.residual);
    }
    if (j.contains("decoder")) {
        const auto& d = j["decoder"];
        if (d.contains("logit_scale")) c.decoder.logit_scale = d["logit_scale"].get<double>();
        if (d.contains("idle_transparent"))
            c.decoder.idle_transparent = d["idle_transparent"].get<bool>();
    }
    opt("n_validation", c.n_validation);
    opt("oracle_ceiling", c.oracle_ceiling);
    opt("oracle_time_limit", c.oracle_time_limit);
    opt("checkpoint_every", c.checkpoint_every);
    return c;
}

/// Full training loop. Resumable: pass a checkpoint written by a previous
/// run and the trajectory continues exactly where it stopped (instance
/// streams are keyed by epoch, and the checkpoint carries optimizer state).
inline TrainResult train(const TrainConfig& cfg, const std::string& resume_path = "") {
    cfg.check();
    namespace fsys = std::filesystem;
    const bool writing = !cfg.out_dir.empty();
    if (writing) {
        fsys::create_directories(cfg.out_dir);
        std::ofstream f(fsys::path(cfg.out_dir) / "config.json", std::ios::binary);
        if (!f) throw std::runtime_error("cannot write config.json to " + cfg.out_dir);
        f << train_config_to_json(cfg).dump(2) << '\n';
    }

    TrainResult out;
    int start_epoch = 1;
    if (resume_path.empty()) {
        out.model = init_model(cfg.encoder, cfg.decoder, cfg.gen.n_locations, cfg.seed);
    } else {
        nlohmann::json meta;
        out.model = load_model(resume_path, &meta);
        if (meta.contains("epoch")) start_epoch = meta["epoch"].get<int>() + 1;
    }

    const detail::ValidationSet val =
        cfg.n_validation > 0 ? detail::make_validation_set(cfg) : detail::ValidationSet{};

    auto save_checkpoint = [&](int epoch, const std::string& name) {
        if (!writing) return;
        nlohmann::json meta = model_meta_json(out.model);
        meta["epoch"] = epoch;
        meta["train_seed"] = cfg.seed;
        out.model.params.save((fsys::path(cfg.out_dir) / name).string(), meta.dump());
    };

    if (cfg.n_validation > 0 && start_epoch == 1) {
        EpochLogRow row = detail::validate_epoch(out.model, val, 0);
        out.log.epochs.push_back(row);
    }

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        int produced = 0, batch_index = 0;
        while (produced < cfg.instances_per_epoch) {
            const int bsz = std::min(cfg.batch_size, cfg.instances_per_epoch - produced);
            std::vector<Instance> batch;
            batch.reserve(bsz);
            for (int b = 0; b < bsz; ++b)
                batch.push_back(detail::train_instance(cfg, epoch, produced + b));

            const BatchStats stats = reinforce_batch(out.model, cfg, batch, epoch, produced);
            if (!out.model.params.adam_step(cfg.learning_rate)) {
                ++out.log.adam_steps_skipped;
                std::fprintf(stderr, "[train] epoch %d batch %d: non-finite gradient, step skipped\n",
                             epoch, batch_index);
            }
            out.log.batches.push_back(
                {epoch, batch_index, stats.mean_cost, stats.mean_baseline, stats.grad_norm,
                 stats.skipped});
            produced += bsz;
            ++batch_index;
        }

        EpochLogRow row;
        if (cfg.n_validation > 0) row = detail::validate_epoch(out.model, val, epoch);
        row.epoch = epoch;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.log.epochs.push_back(row);

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
            save_checkpoint(epoch, "ckpt_epoch_" + std::to_string(epoch) + ".bin");
    }

    save_checkpoint(cfg.epochs, "model.bin");
    if (writing) detail::write_train_logs(cfg, out.log);
    return out;
}

}  // namespace windsched
