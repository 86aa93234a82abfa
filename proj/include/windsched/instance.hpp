#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "windsched/array.hpp"
#include "windsched/rng.hpp"

namespace windsched {

/// One maintenance scheduling problem. Periods are 1-based in all formulas;
/// storage is 0-based (period t maps to column t-1). Location index 0 is the
/// depot and never appears in location_of.
struct Instance {
    int n_turbines = 0;   // I
    int n_periods = 0;    // T
    int capacity = 0;     // M, maintenances per period
    int n_locations = 0;  // J, excluding the depot
    int n_scenarios = 0;  // S

    Grid<double> maint_cost;       // I x T, C[i][t]
    double failure_cost = 0.0;     // C^f
    double visit_cost = 0.0;       // cost per crew location change
    std::vector<int> location_of;  // length I, values 1..J
    Grid<double> price;            // S x T
    Cube<double> max_production;   // S x I x T
    Grid<int> failure_time;        // S x I, values 1..T+1 (T+1 = no failure in horizon)

    int n_slots() const { return n_periods * capacity; }
};

/// Binary maintenance plan m[i][t].
struct Schedule {
    int n_turbines = 0;
    int n_periods = 0;
    Grid<uint8_t> maint;

    Schedule() = default;
    Schedule(int turbines, int periods)
        : n_turbines(turbines), n_periods(periods), maint(turbines, periods, 0) {}
};

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;
};

struct FeasibilityReport {
    bool feasible = true;
    std::vector<std::string> violations;
};

inline ValidationReport validate(const Instance& in) {
    ValidationReport rep;
    auto fail = [&rep](std::string msg) {
        rep.ok = false;
        rep.violations.push_back(std::move(msg));
    };

    if (in.n_turbines <= 0 || in.n_periods <= 0 || in.capacity <= 0 || in.n_locations <= 0 ||
        in.n_scenarios <= 0) {
        fail("dimensions must be positive");
        return rep;
    }
    if (in.n_periods * in.capacity < in.n_turbines)
        fail("capacity-horizon infeasible: T*M < I, no schedule can maintain every turbine once");

    if (in.maint_cost.rows != in.n_turbines || in.maint_cost.cols != in.n_periods)
        fail("maint_cost shape mismatch");
    if (static_cast<int>(in.location_of.size()) != in.n_turbines)
        fail("location_of length mismatch");
    if (in.price.rows != in.n_scenarios || in.price.cols != in.n_periods)
        fail("price shape mismatch");
    if (in.max_production.d0 != in.n_scenarios || in.max_production.d1 != in.n_turbines ||
        in.max_production.d2 != in.n_periods)
        fail("max_production shape mismatch");
    if (in.failure_time.rows != in.n_scenarios || in.failure_time.cols != in.n_turbines)
        fail("failure_time shape mismatch");
    if (!rep.ok) return rep;

    auto nonneg_finite = [](double x) { return std::isfinite(x) && x >= 0.0; };
    for (double c : in.maint_cost.v)
        if (!nonneg_finite(c)) {
            fail("maint_cost entries must be finite and >= 0");
            break;
        }
    if (!nonneg_finite(in.failure_cost)) fail("failure_cost must be finite and >= 0");
    if (!nonneg_finite(in.visit_cost)) fail("visit_cost must be finite and >= 0");
    for (double p : in.price.v)
        if (!nonneg_finite(p)) {
            fail("price entries must be finite and >= 0");
            break;
        }
    for (double p : in.max_production.v)
        if (!nonneg_finite(p)) {
            fail("max_production entries must be finite and >= 0");
            break;
        }
    for (int f : in.failure_time.v)
        if (f < 1 || f > in.n_periods + 1) {
            fail("failure_time entries must lie in [1, T+1]");
            break;
        }
    for (int loc : in.location_of)
        if (loc < 1 || loc > in.n_locations) {
            fail("location_of entries must lie in {1..J} (0 is the depot)");
            break;
        }
    return rep;
}

/// Generator parameters. Defaults produce nondegenerate trade-offs between
/// early maintenance, failure risk, and opportunistic grouping.
struct GeneratorConfig {
    uint64_t seed = 1;
    int n_turbines = 15;
    int n_periods = 10;
    int capacity = 2;
    int n_locations = 4;
    int n_scenarios = 20;

    double price_low = 20.0, price_high = 50.0;
    double production_low = 0.0, production_high = 10.0;
    double base_cost_low = 50.0, base_cost_high = 150.0;   // c0_i
    double cost_slope_low = 0.0, cost_slope_high = 5.0;    // per-period cost rise
    double visit_cost_low = 50.0, visit_cost_high = 200.0;
    double failure_mu_low_frac = 0.3, failure_mu_high_frac = 1.2;  // of T
    double failure_sigma_frac = 0.15;                              // of T
    double failure_cost_multiplier = 3.0;                          // x mean maint cost
};

/// Named instance-size presets. case1..case5 are the benchmark ladder
/// (I=15..50, T=10..30, J=4, M=2, S=20); desk-a/b/c are small enough for the
/// exact solver to certify optimality quickly.
inline GeneratorConfig generator_preset(const std::string& name) {
    GeneratorConfig c;
    auto dims = [&c](int I, int T, int M, int J, int S) {
        c.n_turbines = I;
        c.n_periods = T;
        c.capacity = M;
        c.n_locations = J;
        c.n_scenarios = S;
    };
    if (name == "case1") dims(15, 10, 2, 4, 20);
    else if (name == "case2") dims(25, 15, 2, 4, 20);
    else if (name == "case3") dims(30, 20, 2, 4, 20);
    else if (name == "case4") dims(40, 25, 2, 4, 20);
    else if (name == "case5") dims(50, 30, 2, 4, 20);
    else if (name == "desk-a") dims(5, 4, 2, 4, 4);
    else if (name == "desk-b") dims(8, 5, 2, 4, 4);
    else if (name == "desk-c") dims(10, 6, 2, 4, 4);
    else throw std::invalid_argument("unknown generator preset: " + name);
    return c;
}

inline void validate_generator_config(const GeneratorConfig& c) {
    auto ordered = [](double lo, double hi) { return lo <= hi; };
    if (c.n_turbines <= 0 || c.n_periods <= 0 || c.capacity <= 0 || c.n_locations <= 0 ||
        c.n_scenarios <= 0)
        throw std::invalid_argument("generator dimensions must be positive");
    if (c.n_periods * c.capacity < c.n_turbines)
        throw std::invalid_argument("generator dimensions infeasible: T*M < I");
    if (!ordered(c.price_low, c.price_high) || !ordered(c.production_low, c.production_high) ||
        !ordered(c.base_cost_low, c.base_cost_high) ||
        !ordered(c.cost_slope_low, c.cost_slope_high) ||
        !ordered(c.visit_cost_low, c.visit_cost_high) ||
        !ordered(c.failure_mu_low_frac, c.failure_mu_high_frac))
        throw std::invalid_argument("generator range bounds out of order");
    if (c.price_low < 0 || c.production_low < 0 || c.base_cost_low < 0 || c.cost_slope_low < 0 ||
        c.visit_cost_low < 0 || c.failure_sigma_frac < 0 || c.failure_cost_multiplier < 0)
        throw std::invalid_argument("generator ranges must be nonnegative");
}

/// Draws an instance. Pure function of the config: one mt19937_64 stream,
/// fixed draw order, so equal configs give bit-identical instances.
inline Instance generate(const GeneratorConfig& c) {
    validate_generator_config(c);
    Rng rng(c.seed);

    Instance in;
    in.n_turbines = c.n_turbines;
    in.n_periods = c.n_periods;
    in.capacity = c.capacity;
    in.n_locations = c.n_locations;
    in.n_scenarios = c.n_scenarios;

    const int I = c.n_turbines, T = c.n_periods, S = c.n_scenarios;

    in.price = Grid<double>(S, T);
    for (int s = 0; s < S; ++s)
        for (int t = 0; t < T; ++t) in.price.at(s, t) = rng.uniform(c.price_low, c.price_high);

    in.max_production = Cube<double>(S, I, T);
    for (int s = 0; s < S; ++s)
        for (int i = 0; i < I; ++i)
            for (int t = 0; t < T; ++t)
                in.max_production.at(s, i, t) = rng.uniform(c.production_low, c.production_high);

    // Rising cost curves: C[i][t] = c0_i + slope_i * t with t 1-based.
    in.maint_cost = Grid<double>(I, T);
    double cost_sum = 0.0;
    for (int i = 0; i < I; ++i) {
        const double c0 = rng.uniform(c.base_cost_low, c.base_cost_high);
        const double slope = rng.uniform(c.cost_slope_low, c.cost_slope_high);
        for (int t = 0; t < T; ++t) {
            const double v = c0 + slope * (t + 1);
            in.maint_cost.at(i, t) = v;
            cost_sum += v;
        }
    }
    in.failure_cost = c.failure_cost_multiplier * cost_sum / (static_cast<double>(I) * T);

    in.location_of.resize(I);
    for (int i = 0; i < I; ++i) in.location_of[i] = rng.uniform_int(1, c.n_locations);

    in.visit_cost = rng.uniform(c.visit_cost_low, c.visit_cost_high);

    in.failure_time = Grid<int>(S, I);
    for (int i = 0; i < I; ++i) {
        const double mu = rng.uniform(c.failure_mu_low_frac * T, c.failure_mu_high_frac * T);
        for (int s = 0; s < S; ++s) {
            const double draw = rng.normal(mu, c.failure_sigma_frac * T);
            const int f = static_cast<int>(std::lround(draw));
            in.failure_time.at(s, i) = std::clamp(f, 1, T + 1);
        }
    }

    return in;
}

inline void require_dims_match(const Instance& in, const Schedule& s) {
    if (s.n_turbines != in.n_turbines || s.n_periods != in.n_periods ||
        s.maint.rows != s.n_turbines || s.maint.cols != s.n_periods)
        throw std::invalid_argument("schedule dimensions do not match instance");
}

/// Crew occupancy per period: the sorted set of location indices with at
/// least one maintenance. Empty set means the crew sits at the depot.
inline std::vector<std::vector<int>> crew_occupancy(const Instance& in, const Schedule& s) {
    require_dims_match(in, s);
    std::vector<std::vector<int>> occ(in.n_periods);
    for (int t = 0; t < in.n_periods; ++t) {
        std::vector<bool> seen(in.n_locations + 1, false);
        for (int i = 0; i < in.n_turbines; ++i)
            if (s.maint.at(i, t)) seen[in.location_of[i]] = true;
        for (int j = 1; j <= in.n_locations; ++j)
            if (seen[j]) occ[t].push_back(j);
    }
    return occ;
}

/// Canonical location-change flags: delta[t] = 1 iff some location occupied
/// at t-1 is vacated at t. delta[0] = 0 (no predecessor period). This is the
/// cost-minimal completion of the under-constrained crew variables.
inline std::vector<uint8_t> change_flags(const Instance& in, const Schedule& s) {
    const auto occ = crew_occupancy(in, s);
    std::vector<uint8_t> delta(in.n_periods, 0);
    for (int t = 1; t < in.n_periods; ++t) {
        for (int j : occ[t - 1]) {
            if (!std::binary_search(occ[t].begin(), occ[t].end(), j)) {
                delta[t] = 1;
                break;
            }
        }
    }
    return delta;
}

/// Checks the capacity and exactly-once constraints.
inline FeasibilityReport check_feasible(const Instance& in, const Schedule& s) {
    require_dims_match(in, s);
    FeasibilityReport rep;
    for (int t = 0; t < in.n_periods; ++t) {
        int count = 0;
        for (int i = 0; i < in.n_turbines; ++i) count += s.maint.at(i, t);
        if (count > in.capacity) {
            rep.feasible = false;
            rep.violations.push_back("capacity exceeded in period " + std::to_string(t + 1) +
                                     ": " + std::to_string(count) + " > M=" +
                                     std::to_string(in.capacity));
        }
    }
    for (int i = 0; i < in.n_turbines; ++i) {
        int count = 0;
        for (int t = 0; t < in.n_periods; ++t) count += s.maint.at(i, t);
        if (count != 1) {
            rep.feasible = false;
            rep.violations.push_back("turbine " + std::to_string(i + 1) + " maintained " +
                                     std::to_string(count) + " times, expected exactly once");
        }
    }
    return rep;
}

/// Uniformly random feasible schedule: each turbine gets a period drawn among
/// those with remaining capacity.
inline Schedule random_feasible_schedule(const Instance& in, Rng& rng) {
    Schedule s(in.n_turbines, in.n_periods);
    std::vector<int> remaining(in.n_periods, in.capacity);
    for (int i = 0; i < in.n_turbines; ++i) {
        int open = 0;
        for (int r : remaining) open += (r > 0);
        int pick = rng.uniform_int(0, open - 1);
        for (int t = 0; t < in.n_periods; ++t) {
            if (remaining[t] == 0) continue;
            if (pick-- == 0) {
                s.maint.at(i, t) = 1;
                --remaining[t];
                break;
            }
        }
    }
    return s;
}

}  // namespace windsched
