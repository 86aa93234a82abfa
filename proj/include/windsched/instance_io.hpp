#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "windsched/instance.hpp"

namespace windsched {

inline constexpr const char* kInstanceSchema = "windsched.instance";
inline constexpr int kInstanceSchemaVersion = 1;

namespace detail {

template <typename T>
nlohmann::json grid_to_json(const Grid<T>& g) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < g.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < g.cols; ++c) row.push_back(g.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <typename T>
Grid<T> grid_from_json(const nlohmann::json& j, int rows, int cols, const char* field) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows)
        throw std::runtime_error(std::string("instance field ") + field + ": bad row count");
    Grid<T> g(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const auto& row = j[r];
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw std::runtime_error(std::string("instance field ") + field + ": bad column count");
        for (int c = 0; c < cols; ++c) g.at(r, c) = row[c].get<T>();
    }
    return g;
}

}  // namespace detail

inline nlohmann::json instance_to_json(const Instance& in) {
    nlohmann::json j;
    j["schema"] = kInstanceSchema;
    j["version"] = kInstanceSchemaVersion;
    j["n_turbines"] = in.n_turbines;
    j["n_periods"] = in.n_periods;
    j["capacity"] = in.capacity;
    j["n_locations"] = in.n_locations;
    j["n_scenarios"] = in.n_scenarios;
    j["maint_cost"] = detail::grid_to_json(in.maint_cost);
    j["failure_cost"] = in.failure_cost;
    j["visit_cost"] = in.visit_cost;
    j["location_of"] = in.location_of;
    j["price"] = detail::grid_to_json(in.price);
    // Scenario-major: production[s] is an I x T matrix.
    nlohmann::json prod = nlohmann::json::array();
    for (int s = 0; s < in.n_scenarios; ++s) {
        nlohmann::json mat = nlohmann::json::array();
        for (int i = 0; i < in.n_turbines; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int t = 0; t < in.n_periods; ++t) row.push_back(in.max_production.at(s, i, t));
            mat.push_back(std::move(row));
        }
        prod.push_back(std::move(mat));
    }
    j["max_production"] = std::move(prod);
    j["failure_time"] = detail::grid_to_json(in.failure_time);
    return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"] != kInstanceSchema)
        throw std::runtime_error("not a windsched instance document");
    if (!j.contains("version") || !j["version"].is_number_integer())
        throw std::runtime_error("instance document missing schema version");
    if (j["version"].get<int>() != kInstanceSchemaVersion)
        throw std::runtime_error("unsupported instance schema version " +
                                 j["version"].dump() + ", expected " +
                                 std::to_string(kInstanceSchemaVersion));

    Instance in;
    in.n_turbines = j.at("n_turbines").get<int>();
    in.n_periods = j.at("n_periods").get<int>();
    in.capacity = j.at("capacity").get<int>();
    in.n_locations = j.at("n_locations").get<int>();
    in.n_scenarios = j.at("n_scenarios").get<int>();
    in.maint_cost =
        detail::grid_from_json<double>(j.at("maint_cost"), in.n_turbines, in.n_periods, "maint_cost");
    in.failure_cost = j.at("failure_cost").get<double>();
    in.visit_cost = j.at("visit_cost").get<double>();
    in.location_of = j.at("location_of").get<std::vector<int>>();
    in.price = detail::grid_from_json<double>(j.at("price"), in.n_scenarios, in.n_periods, "price");

    const auto& prod = j.at("max_production");
    if (!prod.is_array() || static_cast<int>(prod.size()) != in.n_scenarios)
        throw std::runtime_error("instance field max_production: bad scenario count");
    in.max_production = Cube<double>(in.n_scenarios, in.n_turbines, in.n_periods);
    for (int s = 0; s < in.n_scenarios; ++s) {
        const auto mat =
            detail::grid_from_json<double>(prod[s], in.n_turbines, in.n_periods, "max_production");
        for (int i = 0; i < in.n_turbines; ++i)
            for (int t = 0; t < in.n_periods; ++t) in.max_production.at(s, i, t) = mat.at(i, t);
    }
    in.failure_time = detail::grid_from_json<int>(j.at("failure_time"), in.n_scenarios,
                                                  in.n_turbines, "failure_time");

    for (double x : in.maint_cost.v)
        if (!std::isfinite(x)) throw std::runtime_error("instance contains non-finite maint_cost");
    for (double x : in.price.v)
        if (!std::isfinite(x)) throw std::runtime_error("instance contains non-finite price");
    for (double x : in.max_production.v)
        if (!std::isfinite(x)) throw std::runtime_error("instance contains non-finite production");
    if (!std::isfinite(in.failure_cost) || !std::isfinite(in.visit_cost))
        throw std::runtime_error("instance contains non-finite cost");
    return in;
}

inline void write_instance(const Instance& in, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << instance_to_json(in).dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline Instance read_instance(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open instance file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("malformed instance file " + path + ": " + e.what());
    }
    return instance_from_json(j);
}

}  // namespace windsched
