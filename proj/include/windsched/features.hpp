#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "windsched/array.hpp"
#include "windsched/instance.hpp"

namespace windsched {

/// Scenario-averaged scheduling cost of maintaining turbine i in period t:
/// before the failure time, the preventive cost plus the revenue lost during
/// the maintenance period; from the failure time on, the failure cost plus
/// all revenue lost between failure and maintenance.
inline Grid<double> maintenance_cost_matrix(const Instance& in) {
    const int I = in.n_turbines, T = in.n_periods, S = in.n_scenarios;
    Grid<double> x(I, T, 0.0);
    for (int i = 0; i < I; ++i) {
        for (int s = 0; s < S; ++s) {
            const int f = in.failure_time.at(s, i);  // 1-based, T+1 = no failure
            double lost_since_failure = 0.0;
            for (int t = 1; t <= T; ++t) {
                double v;
                if (t < f) {
                    v = in.maint_cost.at(i, t - 1) +
                        in.price.at(s, t - 1) * in.max_production.at(s, i, t - 1);
                } else {
                    lost_since_failure +=
                        in.price.at(s, t - 1) * in.max_production.at(s, i, t - 1);
                    v = in.failure_cost + lost_since_failure;
                }
                x.at(i, t - 1) += v;
            }
        }
        for (int t = 0; t < T; ++t) x.at(i, t) /= S;
    }
    return x;
}

/// Cost matrix plus aligned locations after appending idle rows.
struct AugmentedCosts {
    Grid<double> x;              // (I + I') x T
    std::vector<int> locations;  // length I + I', idle rows hold 0 (depot)
    int n_idle = 0;
};

/// Appends I' = T*M - I idle turbines: zero cost, located at the depot.
/// Fixed-length decoding then realizes "at most M per period" as "exactly one
/// pick per slot".
inline AugmentedCosts augment_idle(const Grid<double>& x, const std::vector<int>& locations,
                                   int capacity) {
    const int I = x.rows, T = x.cols;
    if (static_cast<int>(locations.size()) != I)
        throw std::invalid_argument("augment_idle: locations length mismatch");
    const int total = T * capacity;
    if (total < I) throw std::invalid_argument("augment_idle: T*M < I");
    AugmentedCosts out;
    out.n_idle = total - I;
    out.x = Grid<double>(total, T, 0.0);
    for (int i = 0; i < I; ++i)
        for (int t = 0; t < T; ++t) out.x.at(i, t) = x.at(i, t);
    out.locations.assign(total, 0);
    std::copy(locations.begin(), locations.end(), out.locations.begin());
    return out;
}

/// Duplicates each period column across the M maintenance slots.
inline Cube<double> expand_slots(const Grid<double>& x_aug, int capacity) {
    Cube<double> chi(x_aug.rows, x_aug.cols, capacity);
    for (int i = 0; i < x_aug.rows; ++i)
        for (int t = 0; t < x_aug.cols; ++t)
            for (int m = 0; m < capacity; ++m) chi.at(i, t, m) = x_aug.at(i, t);
    return chi;
}

/// Broadcasts each candidate's location over the T x M slot grid.
inline Cube<int> align_locations(const std::vector<int>& locations, int n_periods, int capacity) {
    Cube<int> loc(static_cast<int>(locations.size()), n_periods, capacity);
    for (int i = 0; i < loc.d0; ++i)
        for (int t = 0; t < n_periods; ++t)
            for (int m = 0; m < capacity; ++m) loc.at(i, t, m) = locations[i];
    return loc;
}

/// Multi-step embedding output. chi always holds raw currency values (the
/// reward path reads them); chi_norm holds the network-input copy once
/// normalize() has run.
struct FeatureSet {
    Cube<double> chi;       // (I+I') x T x M, raw
    Cube<int> loc;          // (I+I') x T x M
    int n_idle = 0;
    int n_real = 0;         // I
    int capacity = 0;       // M
    int n_periods = 0;      // T
    int n_locations = 0;    // J (one-hot categories are 0..J)
    double visit_cost = 0;  // Delta, needed by the sequence reward
    double norm_scale = 0;  // 0 until normalized
    Cube<double> chi_norm;  // filled by normalize()

    int n_candidates() const { return chi.d0; }
    int n_slots() const { return n_periods * capacity; }
    bool normalized() const { return norm_scale != 0; }
    /// Raw cost of candidate i in period t (slot copies are identical).
    double cost(int candidate, int period) const { return chi.at(candidate, period, 0); }
    int location(int candidate) const { return loc.at(candidate, 0, 0); }
};

inline FeatureSet featurize(const Instance& in) {
    FeatureSet fs;
    const Grid<double> x = maintenance_cost_matrix(in);
    const AugmentedCosts aug = augment_idle(x, in.location_of, in.capacity);
    fs.chi = expand_slots(aug.x, in.capacity);
    fs.loc = align_locations(aug.locations, in.n_periods, in.capacity);
    fs.n_idle = aug.n_idle;
    fs.n_real = in.n_turbines;
    fs.capacity = in.capacity;
    fs.n_periods = in.n_periods;
    fs.n_locations = in.n_locations;
    fs.visit_cost = in.visit_cost;
    return fs;
}

/// Scales chi into [-1, 1] by its max absolute entry for network input.
/// An all-zero chi is left unchanged with scale 1.
inline FeatureSet normalize(FeatureSet fs) {
    double scale = 0.0;
    for (double v : fs.chi.v) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    fs.norm_scale = scale;
    fs.chi_norm = fs.chi;
    for (double& v : fs.chi_norm.v) v /= scale;
    return fs;
}

inline FeatureSet denormalize(FeatureSet fs) {
    fs.norm_scale = 0;
    fs.chi_norm = Cube<double>();
    return fs;
}

/// Appends extra idle candidates beyond the standard I' = T*M - I, used to
/// run a test case through a model trained on a larger candidate count. The
/// decoder applies an idle-exclusion mask whenever candidates outnumber
/// remaining slots, so feasibility is preserved.
inline FeatureSet pad_candidates(FeatureSet fs, int n_candidates) {
    if (n_candidates < fs.n_candidates())
        throw std::invalid_argument("pad_candidates: cannot shrink candidate set");
    if (n_candidates == fs.n_candidates()) return fs;
    Cube<double> chi(n_candidates, fs.chi.d1, fs.chi.d2, 0.0);
    Cube<int> loc(n_candidates, fs.loc.d1, fs.loc.d2, 0);
    std::copy(fs.chi.v.begin(), fs.chi.v.end(), chi.v.begin());
    std::copy(fs.loc.v.begin(), fs.loc.v.end(), loc.v.begin());
    fs.n_idle += n_candidates - fs.n_candidates();
    fs.chi = std::move(chi);
    fs.loc = std::move(loc);
    if (fs.normalized()) {
        Cube<double> cn(n_candidates, fs.chi.d1, fs.chi.d2, 0.0);
        std::copy(fs.chi_norm.v.begin(), fs.chi_norm.v.end(), cn.v.begin());
        fs.chi_norm = std::move(cn);
    }
    return fs;
}

}  // namespace windsched
