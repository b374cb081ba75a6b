#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "qi/mscn.hpp"

namespace qi {

enum class Direction { Horizontal, Vertical, DiagLeft, DiagRight };

inline const char* to_string(Direction d) {
    switch (d) {
        case Direction::Horizontal: return "H";
        case Direction::Vertical: return "V";
        case Direction::DiagLeft: return "D_left";
        case Direction::DiagRight: return "D_right";
    }
    return "?";
}

/// Fixed direction order used for feature packing everywhere:
/// H, V, D_left, D_right.
inline constexpr Direction kDirectionOrder[4] = {Direction::Horizontal, Direction::Vertical,
                                                 Direction::DiagLeft, Direction::DiagRight};

/// Adjacent-pixel product planes of an M x N MSCN field, valid-region only
/// (no padding):
///   H(i,j)       = I(i,j) * I(i,j+1)     -> M x (N-1)
///   V(i,j)       = I(i,j) * I(i+1,j)     -> (M-1) x N
///   D_right(i,j) = I(i,j) * I(i+1,j+1)   -> (M-1) x (N-1)
///   D_left(i,j)  = I(i,j) * I(i+1,j-1)   -> (M-1) x (N-1), defined for j >= 1
struct DirectionalProducts {
    std::vector<double> horizontal;
    std::vector<double> vertical;
    std::vector<double> diag_right;
    std::vector<double> diag_left;

    const std::vector<double>& plane(Direction d) const {
        switch (d) {
            case Direction::Horizontal: return horizontal;
            case Direction::Vertical: return vertical;
            case Direction::DiagLeft: return diag_left;
            case Direction::DiagRight: return diag_right;
        }
        throw std::logic_error("bad direction");
    }
};

inline DirectionalProducts directional_products(const MscnField& f) {
    const int m = f.height, n = f.width;
    if (m < 2 || n < 2) throw std::invalid_argument("directional products need a field of at least 2x2");
    DirectionalProducts out;
    out.horizontal.reserve(static_cast<size_t>(m) * (n - 1));
    out.vertical.reserve(static_cast<size_t>(m - 1) * n);
    out.diag_right.reserve(static_cast<size_t>(m - 1) * (n - 1));
    out.diag_left.reserve(static_cast<size_t>(m - 1) * (n - 1));

    for (int i = 0; i < m; ++i)
        for (int j = 0; j + 1 < n; ++j) out.horizontal.push_back(f.at(i, j) * f.at(i, j + 1));
    for (int i = 0; i + 1 < m; ++i)
        for (int j = 0; j < n; ++j) out.vertical.push_back(f.at(i, j) * f.at(i + 1, j));
    for (int i = 0; i + 1 < m; ++i)
        for (int j = 0; j + 1 < n; ++j) out.diag_right.push_back(f.at(i, j) * f.at(i + 1, j + 1));
    for (int i = 0; i + 1 < m; ++i)
        for (int j = 1; j < n; ++j) out.diag_left.push_back(f.at(i, j) * f.at(i + 1, j - 1));
    return out;
}

}  // namespace qi
