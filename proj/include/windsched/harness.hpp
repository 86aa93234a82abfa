#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "windsched/decoder.hpp"
#include "windsched/oracle.hpp"
#include "windsched/trainer.hpp"

namespace windsched {

/// Decoded schedule plus its evaluations; what `infer` writes to disk.
struct ScheduleSolution {
    std::vector<int> sequence;
    Schedule schedule;
    std::vector<std::vector<int>> crew_locations;  // per period
    std::vector<uint8_t> delta;
    ObjectiveBreakdown objective;
    double sequence_reward = 0;
    double wall_seconds = 0;
};

inline ScheduleSolution make_solution(const Instance& in, const DecodeResult& dec) {
    ScheduleSolution sol;
    sol.sequence = dec.sequence;
    sol.schedule = dec.schedule;
    sol.crew_locations = crew_occupancy(in, dec.schedule);
    sol.delta = change_flags(in, dec.schedule);
    sol.objective = evaluate_eq11(in, dec.schedule);
    sol.sequence_reward = dec.sequence_reward;
    sol.wall_seconds = dec.wall_seconds;
    return sol;
}

inline nlohmann::json solution_to_json(const ScheduleSolution& sol) {
    nlohmann::json j;
    j["schema"] = "windsched.solution";
    j["version"] = 1;
    j["sequence"] = sol.sequence;
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < sol.schedule.n_turbines; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int t = 0; t < sol.schedule.n_periods; ++t) row.push_back(int(sol.schedule.maint.at(i, t)));
        m.push_back(std::move(row));
    }
    j["maint"] = std::move(m);
    j["crew_locations"] = sol.crew_locations;
    j["delta"] = std::vector<int>(sol.delta.begin(), sol.delta.end());
    j["eq11_value"] = sol.objective.eq11_value;
    j["eq1_value"] = sol.objective.eq1_value;
    j["sequence_reward"] = sol.sequence_reward;
    j["wall_seconds"] = sol.wall_seconds;
    return j;
}

inline nlohmann::json exact_result_to_json(const Instance& in, const ExactResult& ex) {
    const ObjectiveBreakdown b = evaluate_eq11(in, ex.schedule);
    nlohmann::json j;
    j["schema"] = "windsched.exact_solution";
    j["version"] = 1;
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < ex.schedule.n_turbines; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int t = 0; t < ex.schedule.n_periods; ++t) row.push_back(int(ex.schedule.maint.at(i, t)));
        m.push_back(std::move(row));
    }
    j["maint"] = std::move(m);
    const auto delta = change_flags(in, ex.schedule);
    j["delta"] = std::vector<int>(delta.begin(), delta.end());
    j["eq11_value"] = ex.eq11_value;
    j["eq1_value"] = b.eq1_value;
    j["nodes"] = ex.nodes;
    j["proved_optimal"] = ex.proved;
    j["wall_seconds"] = ex.wall_seconds;
    return j;
}

struct GapInstanceRow {
    int index = 0;
    uint64_t seed = 0;
    bool feasible = false;
    bool solved = false;  // oracle proved optimality within budget
    double model_eq11 = 0;
    double optimal_eq11 = 0;
    double gap_percent = 0;  // defined only when solved
    double decode_seconds = 0;
    double oracle_seconds = 0;
};

struct GapReport {
    std::string case_name;
    int n_instances = 0;
    std::vector<GapInstanceRow> rows;
    double mean_gap = 0, q1_gap = 0, median_gap = 0, q3_gap = 0, std_gap = 0;
    double pct_solved = 0;     // oracle success rate
    double pct_feasible = 0;   // decoded schedules passing the feasibility check
    double mean_decode_seconds = 0, mean_oracle_seconds = 0;
};

namespace detail {

/// Linear-interpolation quantile on sorted data (the common "type 7" rule).
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    const double h = p * (static_cast<double>(sorted.size()) - 1.0);
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - lo) * (sorted[lo + 1] - sorted[lo]);
}

inline void fill_gap_aggregates(GapReport& rep) {
    std::vector<double> gaps;
    int feasible = 0, solved = 0;
    double dec_s = 0, ora_s = 0;
    for (const auto& r : rep.rows) {
        feasible += r.feasible;
        solved += r.solved;
        dec_s += r.decode_seconds;
        ora_s += r.oracle_seconds;
        if (r.solved) gaps.push_back(r.gap_percent);
    }
    const int n = static_cast<int>(rep.rows.size());
    rep.n_instances = n;
    rep.pct_solved = n ? 100.0 * solved / n : 0.0;
    rep.pct_feasible = n ? 100.0 * feasible / n : 0.0;
    rep.mean_decode_seconds = n ? dec_s / n : 0.0;
    rep.mean_oracle_seconds = n ? ora_s / n : 0.0;
    if (gaps.empty()) return;
    double sum = 0;
    for (double g : gaps) sum += g;
    rep.mean_gap = sum / gaps.size();
    double ss = 0;
    for (double g : gaps) ss += (g - rep.mean_gap) * (g - rep.mean_gap);
    rep.std_gap = gaps.size() > 1 ? std::sqrt(ss / (gaps.size() - 1)) : 0.0;
    std::sort(gaps.begin(), gaps.end());
    rep.q1_gap = quantile_sorted(gaps, 0.25);
    rep.median_gap = quantile_sorted(gaps, 0.50);
    rep.q3_gap = quantile_sorted(gaps, 0.75);
}

}  // namespace detail

struct GapStudyOptions {
    int n_instances = 100;
    uint64_t seed = 1;
    ExactOptions exact;
    int pad_to_candidates = 0;  // 0 = natural featurization
};

/// Greedy-decode each generated instance and compare with the proven
/// optimum. Oracle timeouts leave the instance out of the gap statistics but
/// count against pct_solved.
inline GapReport run_gap_study(const Model& model, const GeneratorConfig& gen,
                               const GapStudyOptions& opt) {
    NoGradGuard ng;
    GapReport rep;
    for (int i = 0; i < opt.n_instances; ++i) {
        GapInstanceRow row;
        row.index = i;
        GeneratorConfig g = gen;
        row.seed = derive_seed(opt.seed, 21, static_cast<uint64_t>(i));
        g.seed = row.seed;
        const Instance in = generate(g);

        const auto t0 = std::chrono::steady_clock::now();
        FeatureSet fs = normalize(featurize(in));
        if (opt.pad_to_candidates > fs.n_candidates())
            fs = pad_candidates(std::move(fs), opt.pad_to_candidates);
        const EncodeResult enc = encode(model, fs);
        Rng unused(0);
        const DecodeResult dec = decode(model, fs, enc, DecodeMode::greedy, unused);
        row.decode_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        row.feasible = check_feasible(in, dec.schedule).feasible;
        row.model_eq11 = evaluate_eq11(in, dec.schedule).eq11_value;

        const ExactResult ex = solve_exact(in, opt.exact);
        row.oracle_seconds = ex.wall_seconds;
        if (ex.proved) {
            row.solved = true;
            row.optimal_eq11 = ex.eq11_value;
            row.gap_percent = (row.model_eq11 - ex.eq11_value) / ex.eq11_value * 100.0;
        }
        rep.rows.push_back(row);
    }
    detail::fill_gap_aggregates(rep);
    return rep;
}

inline std::string gap_report_csv(const GapReport& rep) {
    std::ostringstream os;
    os << "index,seed,feasible,solved,model_eq11,optimal_eq11,gap_percent,decode_seconds,"
          "oracle_seconds\n";
    for (const auto& r : rep.rows) {
        os << r.index << ',' << r.seed << ',' << int(r.feasible) << ',' << int(r.solved) << ','
           << detail::fmt_double(r.model_eq11) << ',' << detail::fmt_double(r.optimal_eq11) << ','
           << detail::fmt_double(r.gap_percent) << ',' << detail::fmt_double(r.decode_seconds)
           << ',' << detail::fmt_double(r.oracle_seconds) << '\n';
    }
    return os.str();
}

/// Rebuilds a report from its per-instance CSV; aggregates recomputed from
/// the parsed rows must match the originals exactly.
inline GapReport gap_report_from_csv(const std::string& csv) {
    GapReport rep;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        GapInstanceRow r;
        std::istringstream ls(line);
        std::string field;
        auto next = [&]() {
            if (!std::getline(ls, field, ',')) throw std::runtime_error("bad gap CSV row");
            return field;
        };
        r.index = std::stoi(next());
        r.seed = std::stoull(next());
        r.feasible = std::stoi(next()) != 0;
        r.solved = std::stoi(next()) != 0;
        r.model_eq11 = std::stod(next());
        r.optimal_eq11 = std::stod(next());
        r.gap_percent = std::stod(next());
        r.decode_seconds = std::stod(next());
        r.oracle_seconds = std::stod(next());
        rep.rows.push_back(r);
    }
    detail::fill_gap_aggregates(rep);
    return rep;
}

inline nlohmann::json gap_report_to_json(const GapReport& rep) {
    nlohmann::json j;
    j["schema"] = "windsched.gap_report";
    j["version"] = 1;
    j["case"] = rep.case_name;
    j["n_instances"] = rep.n_instances;
    j["mean_gap_percent"] = rep.mean_gap;
    j["q1_gap_percent"] = rep.q1_gap;
    j["median_gap_percent"] = rep.median_gap;
    j["q3_gap_percent"] = rep.q3_gap;
    j["std_gap_percent"] = rep.std_gap;
    j["pct_solved"] = rep.pct_solved;
    j["pct_feasible"] = rep.pct_feasible;
    j["mean_decode_seconds"] = rep.mean_decode_seconds;
    j["mean_oracle_seconds"] = rep.mean_oracle_seconds;
    return j;
}

struct TransferMatrix {
    std::vector<std::string> train_cases;
    std::vector<std::string> test_cases;
    std::vector<std::vector<GapReport>> reports;  // [train][test]
};

/// Evaluates each trained model on each test case. Test instances whose
/// candidate count falls short of the training shape are padded with extra
/// idle turbines; larger test cases run at their natural size.
inline TransferMatrix run_transfer_study(
    const std::vector<std::pair<std::string, const Model*>>& models,
    const std::vector<std::string>& test_cases, const GapStudyOptions& base_opt) {
    TransferMatrix tm;
    for (const auto& [name, _] : models) tm.train_cases.push_back(name);
    tm.test_cases = test_cases;
    for (const auto& [train_name, model] : models) {
        const GeneratorConfig train_gen = generator_preset(train_name);
        const int trained_cands = train_gen.n_periods * train_gen.capacity;
        std::vector<GapReport> row;
        for (const auto& test_name : test_cases) {
            const GeneratorConfig test_gen = generator_preset(test_name);
            GapStudyOptions opt = base_opt;
            const int natural = test_gen.n_periods * test_gen.capacity;
            opt.pad_to_candidates = std::max(natural, trained_cands);
            GapReport rep = run_gap_study(*model, test_gen, opt);
            rep.case_name = train_name + "->" + test_name;
            row.push_back(std::move(rep));
        }
        tm.reports.push_back(std::move(row));
    }
    return tm;
}

inline nlohmann::json transfer_matrix_to_json(const TransferMatrix& tm) {
    nlohmann::json j;
    j["schema"] = "windsched.transfer_matrix";
    j["version"] = 1;
    j["train_cases"] = tm.train_cases;
    j["test_cases"] = tm.test_cases;
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& row : tm.reports) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& rep : row) r.push_back(gap_report_to_json(rep));
        grid.push_back(std::move(r));
    }
    j["grid"] = std::move(grid);
    return j;
}

/// Gantt-ready rows, one per decoding slot:
/// period,slot,turbine,location,is_idle,delta. Real turbines are 1-based;
/// idle picks write turbine 0 at the depot.
inline std::string schedule_plot_csv(const Instance& in, const ScheduleSolution& sol) {
    std::ostringstream os;
    os << "period,slot,turbine,location,is_idle,delta\n";
    const int M = in.capacity;
    for (size_t k = 0; k < sol.sequence.size(); ++k) {
        const int period = static_cast<int>(k) / M;
        const int slot = static_cast<int>(k) % M;
        const int v = sol.sequence[k];
        const bool idle = v >= in.n_turbines;
        os << (period + 1) << ',' << (slot + 1) << ',' << (idle ? 0 : v + 1) << ','
           << (idle ? 0 : in.location_of[v]) << ',' << int(idle) << ','
           << int(sol.delta[period]) << '\n';
    }
    return os.str();
}

struct TimingStats {
    std::vector<double> seconds;
    double mean = 0, median = 0, p90 = 0, min = 0, max = 0;
};

/// Times the full inference pipeline (featurize, encode, greedy decode) on
/// freshly generated instances.
inline TimingStats bench_inference(const Model& model, const GeneratorConfig& gen, int n,
                                   uint64_t seed) {
    NoGradGuard ng;
    TimingStats st;
    for (int i = 0; i < n; ++i) {
        GeneratorConfig g = gen;
        g.seed = derive_seed(seed, 31, static_cast<uint64_t>(i));
        const Instance in = generate(g);
        const auto t0 = std::chrono::steady_clock::now();
        const FeatureSet fs = normalize(featurize(in));
        const EncodeResult enc = encode(model, fs);
        Rng unused(0);
        const DecodeResult dec = decode(model, fs, enc, DecodeMode::greedy, unused);
        st.seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        if (!check_feasible(in, dec.schedule).feasible)
            throw std::runtime_error("bench_inference: infeasible decode");
    }
    std::vector<double> sorted = st.seconds;
    std::sort(sorted.begin(), sorted.end());
    if (!sorted.empty()) {
        double sum = 0;
        for (double s : sorted) sum += s;
        st.mean = sum / sorted.size();
        st.median = detail::quantile_sorted(sorted, 0.5);
        st.p90 = detail::quantile_sorted(sorted, 0.9);
        st.min = sorted.front();
        st.max = sorted.back();
    }
    return st;
}

inline nlohmann::json timing_stats_to_json(const TimingStats& st) {
    return nlohmann::json{{"schema", "windsched.bench"}, {"version", 1},
                          {"n", st.seconds.size()},     {"mean_seconds", st.mean},
                          {"median_seconds", st.median}, {"p90_seconds", st.p90},
                          {"min_seconds", st.min},      {"max_seconds", st.max},
                          {"seconds", st.seconds}};
}

}  // namespace windsched
