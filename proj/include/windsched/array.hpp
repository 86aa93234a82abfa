#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace windsched {

/// Dense row-major 2-D array.
template <typename T>
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int r, int c, T fill = T{}) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    T& at(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * cols + c];
    }
    const T& at(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * cols + c];
    }
    size_t size() const { return v.size(); }

    bool operator==(const Grid& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

/// Dense row-major 3-D array, outermost dimension first.
template <typename T>
struct Cube {
    int d0 = 0;
    int d1 = 0;
    int d2 = 0;
    std::vector<T> v;

    Cube() = default;
    Cube(int a, int b, int c, T fill = T{})
        : d0(a), d1(b), d2(c), v(static_cast<size_t>(a) * b * c, fill) {}

    T& at(int a, int b, int c) {
        assert(a >= 0 && a < d0 && b >= 0 && b < d1 && c >= 0 && c < d2);
        return v[(static_cast<size_t>(a) * d1 + b) * d2 + c];
    }
    const T& at(int a, int b, int c) const {
        assert(a >= 0 && a < d0 && b >= 0 && b < d1 && c >= 0 && c < d2);
        return v[(static_cast<size_t>(a) * d1 + b) * d2 + c];
    }
    size_t size() const { return v.size(); }

    bool operator==(const Cube& o) const {
        return d0 == o.d0 && d1 == o.d1 && d2 == o.d2 && v == o.v;
    }
};

}  // namespace windsched
