// Command-line front end: instance generation, feature dumps, exact solves,
// training, inference, and the gap/transfer/bench studies.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "windsched/harness.hpp"
#include "windsched/instance_io.hpp"
#include "windsched/trainer.hpp"

namespace fs = std::filesystem;
namespace ws = windsched;

namespace {

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    f >> j;
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    if (const fs::path p = fs::path(path); p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path);
}

ws::GeneratorConfig resolve_generator(const std::string& preset, const std::string& config_path,
                                      std::optional<uint64_t> seed) {
    ws::GeneratorConfig gen =
        preset.empty() ? ws::GeneratorConfig{} : ws::generator_preset(preset);
    if (!config_path.empty()) {
        nlohmann::json j = read_json_file(config_path);
        if (!j.contains("preset") && !preset.empty()) j["preset"] = preset;
        gen = ws::generator_config_from_json(j);
    }
    if (seed) gen.seed = *seed;
    return gen;
}

ws::Model load_model_or_fail(const std::string& path) {
    if (path.empty()) throw std::runtime_error("--model is required");
    return ws::load_model(path);
}

nlohmann::json features_to_json(const ws::FeatureSet& f) {
    nlohmann::json chi = nlohmann::json::array(), loc = nlohmann::json::array();
    for (int i = 0; i < f.n_candidates(); ++i) {
        nlohmann::json ci = nlohmann::json::array(), li = nlohmann::json::array();
        for (int t = 0; t < f.n_periods; ++t) {
            nlohmann::json ct = nlohmann::json::array(), lt = nlohmann::json::array();
            for (int m = 0; m < f.capacity; ++m) {
                ct.push_back(f.chi.at(i, t, m));
                lt.push_back(f.loc.at(i, t, m));
            }
            ci.push_back(std::move(ct));
            li.push_back(std::move(lt));
        }
        chi.push_back(std::move(ci));
        loc.push_back(std::move(li));
    }
    return nlohmann::json{{"schema", "windsched.features"},
                          {"version", 1},
                          {"n_real", f.n_real},
                          {"n_idle", f.n_idle},
                          {"n_periods", f.n_periods},
                          {"capacity", f.capacity},
                          {"norm_scale", f.normalized() ? f.norm_scale : 1.0},
                          {"chi", std::move(chi)},
                          {"loc", std::move(loc)}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"windsched: attention-policy wind farm maintenance scheduling"};
    app.require_subcommand(1);

    // --- generate ---
    std::string gen_preset = "case1", gen_config, gen_out;
    std::optional<uint64_t> gen_seed;
    auto* cmd_gen = app.add_subcommand("generate", "Generate a problem instance");
    cmd_gen->add_option("--preset", gen_preset, "case1..case5 or desk-a/b/c");
    cmd_gen->add_option("--config", gen_config, "generator config JSON (overrides preset)");
    cmd_gen->add_option("--seed", gen_seed, "generator seed");
    cmd_gen->add_option("--out", gen_out, "output instance path")->required();

    // --- features ---
    std::string feat_in, feat_out;
    bool feat_normalized = false;
    auto* cmd_feat = app.add_subcommand("features", "Dump the embedding inputs for an instance");
    cmd_feat->add_option("instance", feat_in, "instance JSON")->required();
    cmd_feat->add_option("--out", feat_out, "output JSON path")->required();
    cmd_feat->add_flag("--normalized", feat_normalized, "dump the normalized copy");

    // --- solve-exact ---
    std::string ex_in, ex_out, ex_config;
    double ex_limit = 3600.0;
    int ex_ceiling = 10;
    auto* cmd_ex = app.add_subcommand("solve-exact", "Branch-and-bound exact solve");
    cmd_ex->add_option("instance", ex_in, "instance JSON")->required();
    cmd_ex->add_option("--time-limit", ex_limit, "seconds before returning the incumbent");
    cmd_ex->add_option("--ceiling", ex_ceiling, "max turbine count accepted");
    cmd_ex->add_option("--config", ex_config, "JSON with time_limit / ceiling overrides");
    cmd_ex->add_option("--out", ex_out, "solution JSON path")->required();

    // --- train ---
    std::string tr_preset = "desk-case-a", tr_config, tr_out, tr_resume;
    std::optional<uint64_t> tr_seed;
    auto* cmd_tr = app.add_subcommand("train", "Policy-gradient training");
    cmd_tr->add_option("--preset", tr_preset, "desk-case-a/b/c or paper-case1..5");
    cmd_tr->add_option("--config", tr_config, "train config JSON (overrides preset)");
    cmd_tr->add_option("--seed", tr_seed, "training seed");
    cmd_tr->add_option("--out", tr_out, "run directory")->required();
    cmd_tr->add_option("--resume", tr_resume, "checkpoint to continue from");

    // --- infer ---
    std::string inf_in, inf_model, inf_mode = "greedy", inf_out, inf_config;
    std::optional<uint64_t> inf_seed;
    int inf_pad = 0;
    auto* cmd_inf = app.add_subcommand("infer", "Decode a schedule with a trained model");
    cmd_inf->add_option("instance", inf_in, "instance JSON")->required();
    cmd_inf->add_option("--model", inf_model, "model checkpoint")->required();
    cmd_inf->add_option("--mode", inf_mode, "greedy | sample");
    cmd_inf->add_option("--seed", inf_seed, "sampling seed");
    cmd_inf->add_option("--pad-to", inf_pad, "pad candidate count (transfer runs)");
    cmd_inf->add_option("--config", inf_config, "JSON with mode / seed / pad_to overrides");
    cmd_inf->add_option("--out", inf_out, "schedule JSON path")->required();

    // --- gap-study ---
    std::string gap_model, gap_preset = "desk-a", gap_out, gap_config;
    int gap_n = 100;
    std::optional<uint64_t> gap_seed;
    double gap_limit = 60.0;
    int gap_ceiling = 10;
    auto* cmd_gap = app.add_subcommand("gap-study", "Greedy decode vs exact optimum");
    cmd_gap->add_option("--model", gap_model, "model checkpoint")->required();
    cmd_gap->add_option("--preset", gap_preset, "instance preset");
    cmd_gap->add_option("--n", gap_n, "number of instances");
    cmd_gap->add_option("--seed", gap_seed, "study seed");
    cmd_gap->add_option("--time-limit", gap_limit, "oracle budget per instance (s)");
    cmd_gap->add_option("--ceiling", gap_ceiling, "oracle turbine ceiling");
    cmd_gap->add_option("--config", gap_config, "JSON with preset / n / seed / time_limit overrides");
    cmd_gap->add_option("--out", gap_out, "output directory")->required();

    // --- transfer-study ---
    std::vector<std::string> tx_models;  // name=checkpoint.bin
    std::vector<std::string> tx_tests;
    int tx_n = 50;
    std::optional<uint64_t> tx_seed;
    double tx_limit = 60.0;
    std::string tx_out, tx_config;
    auto* cmd_tx = app.add_subcommand("transfer-study", "Cross-case evaluation grid");
    cmd_tx->add_option("--model", tx_models, "train-case=checkpoint (repeatable)")->required();
    cmd_tx->add_option("--test", tx_tests, "test case preset (repeatable)")->required();
    cmd_tx->add_option("--n", tx_n, "instances per cell");
    cmd_tx->add_option("--seed", tx_seed, "study seed");
    cmd_tx->add_option("--time-limit", tx_limit, "oracle budget per instance (s)");
    cmd_tx->add_option("--config", tx_config, "JSON with n / seed / time_limit overrides");
    cmd_tx->add_option("--out", tx_out, "output directory")->required();

    // --- bench ---
    std::string bn_model, bn_preset = "case5", bn_out, bn_config;
    int bn_n = 10;
    std::optional<uint64_t> bn_seed;
    auto* cmd_bn = app.add_subcommand("bench", "Inference wall-clock benchmark");
    cmd_bn->add_option("--model", bn_model, "model checkpoint (default: fresh default-config model)");
    cmd_bn->add_option("--preset", bn_preset, "instance preset");
    cmd_bn->add_option("--n", bn_n, "number of timed decodes");
    cmd_bn->add_option("--seed", bn_seed, "bench seed");
    cmd_bn->add_option("--config", bn_config, "JSON with preset / n / seed overrides");
    cmd_bn->add_option("--out", bn_out, "timing JSON path")->required();

    // --- plot-data ---
    std::string pd_in, pd_model, pd_mode = "greedy", pd_out, pd_config;
    std::optional<uint64_t> pd_seed;
    auto* cmd_pd = app.add_subcommand("plot-data", "Gantt-ready schedule CSV");
    cmd_pd->add_option("instance", pd_in, "instance JSON")->required();
    cmd_pd->add_option("--model", pd_model, "model checkpoint")->required();
    cmd_pd->add_option("--mode", pd_mode, "greedy | sample");
    cmd_pd->add_option("--seed", pd_seed, "sampling seed");
    cmd_pd->add_option("--config", pd_config, "JSON with mode / seed overrides");
    cmd_pd->add_option("--out", pd_out, "CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) {
            const ws::GeneratorConfig gen = resolve_generator(gen_preset, gen_config, gen_seed);
            const ws::Instance in = ws::generate(gen);
            ws::write_instance(in, gen_out);
            std::printf("wrote %s (I=%d T=%d M=%d J=%d S=%d)\n", gen_out.c_str(), in.n_turbines,
                        in.n_periods, in.capacity, in.n_locations, in.n_scenarios);
        } else if (cmd_feat->parsed()) {
            const ws::Instance in = ws::read_instance(feat_in);
            ws::FeatureSet f = ws::featurize(in);
            if (feat_normalized) f = ws::normalize(f);
            write_text(feat_out, features_to_json(f).dump(2) + "\n");
            std::printf("wrote %s (%d candidates, %d idle)\n", feat_out.c_str(), f.n_candidates(),
                        f.n_idle);
        } else if (cmd_ex->parsed()) {
            const ws::Instance in = ws::read_instance(ex_in);
            ws::ExactOptions opt;
            opt.time_limit_seconds = ex_limit;
            opt.turbine_ceiling = ex_ceiling;
            if (!ex_config.empty()) {
                const nlohmann::json j = read_json_file(ex_config);
                if (j.contains("time_limit")) opt.time_limit_seconds = j["time_limit"].get<double>();
                if (j.contains("ceiling")) opt.turbine_ceiling = j["ceiling"].get<int>();
            }
            const ws::ExactResult res = ws::solve_exact(in, opt);
            write_text(ex_out, ws::exact_result_to_json(in, res).dump(2) + "\n");
            std::printf("eq11=%.6f nodes=%llu proved=%d wall=%.3fs -> %s\n", res.eq11_value,
                        static_cast<unsigned long long>(res.nodes), int(res.proved),
                        res.wall_seconds, ex_out.c_str());
        } else if (cmd_tr->parsed()) {
            ws::TrainConfig cfg = ws::train_preset(tr_preset);
            if (!tr_config.empty()) {
                nlohmann::json j = read_json_file(tr_config);
                if (!j.contains("preset")) j["preset"] = tr_preset;
                cfg = ws::train_config_from_json(j);
            }
            if (tr_seed) cfg.seed = *tr_seed;
            cfg.out_dir = tr_out;
            const ws::TrainResult res = ws::train(cfg, tr_resume);
            const auto& last = res.log.epochs.empty() ? ws::EpochLogRow{} : res.log.epochs.back();
            std::printf("trained %d epochs -> %s (final val gap %s)\n", cfg.epochs,
                        tr_out.c_str(),
                        last.has_gap ? (std::to_string(last.val_gap_percent) + "%").c_str() : "n/a");
        } else if (cmd_inf->parsed()) {
            if (!inf_config.empty()) {
                const nlohmann::json j = read_json_file(inf_config);
                if (j.contains("mode")) inf_mode = j["mode"].get<std::string>();
                if (j.contains("seed")) inf_seed = j["seed"].get<uint64_t>();
                if (j.contains("pad_to")) inf_pad = j["pad_to"].get<int>();
            }
            const ws::Instance in = ws::read_instance(inf_in);
            const ws::Model model = load_model_or_fail(inf_model);
            ws::NoGradGuard ng;
            ws::FeatureSet f = ws::normalize(ws::featurize(in));
            if (inf_pad > f.n_candidates()) f = ws::pad_candidates(std::move(f), inf_pad);
            const ws::EncodeResult enc = ws::encode(model, f);
            ws::Rng rng(inf_seed.value_or(1));
            const ws::DecodeMode mode =
                inf_mode == "sample" ? ws::DecodeMode::sample : ws::DecodeMode::greedy;
            const ws::DecodeResult dec = ws::decode(model, f, enc, mode, rng);
            const ws::ScheduleSolution sol = ws::make_solution(in, dec);
            write_text(inf_out, ws::solution_to_json(sol).dump(2) + "\n");
            std::printf("eq11=%.6f seq_reward=%.6f wall=%.3fs -> %s\n", sol.objective.eq11_value,
                        sol.sequence_reward, sol.wall_seconds, inf_out.c_str());
        } else if (cmd_gap->parsed()) {
            if (!gap_config.empty()) {
                const nlohmann::json j = read_json_file(gap_config);
                if (j.contains("preset")) gap_preset = j["preset"].get<std::string>();
                if (j.contains("n")) gap_n = j["n"].get<int>();
                if (j.contains("seed")) gap_seed = j["seed"].get<uint64_t>();
                if (j.contains("time_limit")) gap_limit = j["time_limit"].get<double>();
                if (j.contains("ceiling")) gap_ceiling = j["ceiling"].get<int>();
            }
            const ws::Model model = load_model_or_fail(gap_model);
            ws::GapStudyOptions opt;
            opt.n_instances = gap_n;
            opt.seed = gap_seed.value_or(1);
            opt.exact.time_limit_seconds = gap_limit;
            opt.exact.turbine_ceiling = gap_ceiling;
            ws::GapReport rep = ws::run_gap_study(model, ws::generator_preset(gap_preset), opt);
            rep.case_name = gap_preset;
            fs::create_directories(gap_out);
            const nlohmann::json echo{{"preset", gap_preset}, {"n", gap_n},
                                      {"seed", opt.seed},     {"time_limit", gap_limit},
                                      {"ceiling", gap_ceiling}, {"model", gap_model}};
            write_text((fs::path(gap_out) / "config.json").string(), echo.dump(2) + "\n");
            write_text((fs::path(gap_out) / "gaps.csv").string(), ws::gap_report_csv(rep));
            write_text((fs::path(gap_out) / "report.json").string(),
                       ws::gap_report_to_json(rep).dump(2) + "\n");
            std::printf("%s: mean gap %.4f%% (median %.4f%%), %.1f%% solved, %.1f%% feasible\n",
                        gap_preset.c_str(), rep.mean_gap, rep.median_gap, rep.pct_solved,
                        rep.pct_feasible);
        } else if (cmd_tx->parsed()) {
            std::vector<ws::Model> models;
            std::vector<std::pair<std::string, const ws::Model*>> named;
            models.reserve(tx_models.size());
            for (const auto& spec : tx_models) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw std::runtime_error("--model expects train-case=checkpoint, got " + spec);
                models.push_back(ws::load_model(spec.substr(eq + 1)));
                named.emplace_back(spec.substr(0, eq), nullptr);
            }
            for (size_t i = 0; i < models.size(); ++i) named[i].second = &models[i];
            if (!tx_config.empty()) {
                const nlohmann::json j = read_json_file(tx_config);
                if (j.contains("n")) tx_n = j["n"].get<int>();
                if (j.contains("seed")) tx_seed = j["seed"].get<uint64_t>();
                if (j.contains("time_limit")) tx_limit = j["time_limit"].get<double>();
            }
            ws::GapStudyOptions opt;
            opt.n_instances = tx_n;
            opt.seed = tx_seed.value_or(1);
            opt.exact.time_limit_seconds = tx_limit;
            const ws::TransferMatrix tm = ws::run_transfer_study(named, tx_tests, opt);
            fs::create_directories(tx_out);
            const nlohmann::json echo{{"models", tx_models}, {"tests", tx_tests},
                                      {"n", tx_n},           {"seed", opt.seed},
                                      {"time_limit", tx_limit}};
            write_text((fs::path(tx_out) / "config.json").string(), echo.dump(2) + "\n");
            write_text((fs::path(tx_out) / "transfer.json").string(),
                       ws::transfer_matrix_to_json(tm).dump(2) + "\n");
            for (size_t r = 0; r < tm.reports.size(); ++r)
                for (size_t c = 0; c < tm.reports[r].size(); ++c)
                    write_text((fs::path(tx_out) /
                                (tm.train_cases[r] + "_on_" + tm.test_cases[c] + ".csv"))
                                   .string(),
                               ws::gap_report_csv(tm.reports[r][c]));
            for (size_t r = 0; r < tm.reports.size(); ++r)
                for (size_t c = 0; c < tm.reports[r].size(); ++c)
                    std::printf("%s on %s: mean gap %.4f%%, %.1f%% feasible\n",
                                tm.train_cases[r].c_str(), tm.test_cases[c].c_str(),
                                tm.reports[r][c].mean_gap, tm.reports[r][c].pct_feasible);
        } else if (cmd_bn->parsed()) {
            if (!bn_config.empty()) {
                const nlohmann::json j = read_json_file(bn_config);
                if (j.contains("preset")) bn_preset = j["preset"].get<std::string>();
                if (j.contains("n")) bn_n = j["n"].get<int>();
                if (j.contains("seed")) bn_seed = j["seed"].get<uint64_t>();
            }
            ws::Model model = bn_model.empty()
                                  ? ws::init_model(ws::EncoderConfig{}, ws::DecoderConfig{},
                                                   ws::generator_preset(bn_preset).n_locations,
                                                   bn_seed.value_or(1))
                                  : ws::load_model(bn_model);
            const ws::TimingStats st =
                ws::bench_inference(model, ws::generator_preset(bn_preset), bn_n,
                                    bn_seed.value_or(1));
            nlohmann::json out = ws::timing_stats_to_json(st);
            out["config"] = {{"preset", bn_preset}, {"n", bn_n}, {"seed", bn_seed.value_or(1)},
                             {"model", bn_model.empty() ? "default-config random init" : bn_model}};
            write_text(bn_out, out.dump(2) + "\n");
            std::printf("%s x%d: mean %.3fs median %.3fs max %.3fs\n", bn_preset.c_str(), bn_n,
                        st.mean, st.median, st.max);
        } else if (cmd_pd->parsed()) {
            if (!pd_config.empty()) {
                const nlohmann::json j = read_json_file(pd_config);
                if (j.contains("mode")) pd_mode = j["mode"].get<std::string>();
                if (j.contains("seed")) pd_seed = j["seed"].get<uint64_t>();
            }
            const ws::Instance in = ws::read_instance(pd_in);
            const ws::Model model = load_model_or_fail(pd_model);
            ws::NoGradGuard ng;
            const ws::FeatureSet f = ws::normalize(ws::featurize(in));
            const ws::EncodeResult enc = ws::encode(model, f);
            ws::Rng rng(pd_seed.value_or(1));
            const ws::DecodeMode mode =
                pd_mode == "sample" ? ws::DecodeMode::sample : ws::DecodeMode::greedy;
            const ws::ScheduleSolution sol =
                ws::make_solution(in, ws::decode(model, f, enc, mode, rng));
            write_text(pd_out, ws::schedule_plot_csv(in, sol));
            std::printf("wrote %s\n", pd_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
