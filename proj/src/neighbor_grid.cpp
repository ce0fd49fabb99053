#include "greeks/neighbor_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "greeks/error.hpp"

namespace greeks {

NeighborGrid::NeighborGrid(std::span<const double> points, int dim, double cell_size)
    : dim_(dim), cell_(cell_size) {
    if (dim_ < 1 || dim_ > 8) throw ArgumentError("neighbor grid supports 1 to 8 dimensions");
    if (!(cell_ > 0.0) || !std::isfinite(cell_)) throw ArgumentError("cell size must be positive");
    const std::size_t n = points.size() / static_cast<std::size_t>(dim_);
    if (n > std::numeric_limits<std::uint32_t>::max()) return;

    min_cell_.assign(dim_, std::numeric_limits<long>::max());
    std::vector<long> max_cell(dim_, std::numeric_limits<long>::min());
    std::vector<long> cells(n * dim_);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < dim_; ++k) {
            const double scaled = std::floor(points[i * dim_ + k] / cell_);
            if (!std::isfinite(scaled) || std::abs(scaled) > 1e15) return;
            const long c = static_cast<long>(scaled);
            cells[i * dim_ + k] = c;
            min_cell_[k] = std::min(min_cell_[k], c);
            max_cell[k] = std::max(max_cell[k], c);
        }
    }
    extent_.assign(dim_, 1);
    double key_space = 1.0;
    for (int k = 0; k < dim_; ++k) {
        extent_[k] = n == 0 ? 1 : max_cell[k] - min_cell_[k] + 1;
        key_space *= static_cast<double>(extent_[k]);
    }
    if (key_space > 1.8e19) return;

    auto key_of = [&](std::size_t i) {
        std::uint64_t key = 0;
        for (int k = 0; k < dim_; ++k)
            key = key * static_cast<std::uint64_t>(extent_[k]) +
                  static_cast<std::uint64_t>(cells[i * dim_ + k] - min_cell_[k]);
        return key;
    };
    std::vector<std::uint64_t> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = key_of(i);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });

    coords_.resize(n * dim_);
    index_ = order;
    for (std::size_t p = 0; p < n; ++p)
        std::copy_n(&points[static_cast<std::size_t>(order[p]) * dim_], dim_, &coords_[p * dim_]);
    cells_.reserve(n / 4 + 1);
    std::size_t start = 0;
    for (std::size_t p = 1; p <= n; ++p) {
        if (p == n || keys[order[p]] != keys[order[start]]) {
            cells_.emplace(keys[order[start]], std::make_pair(static_cast<std::uint32_t>(start),
                                                              static_cast<std::uint32_t>(p)));
            start = p;
        }
    }
    usable_ = true;
}

long NeighborGrid::cell_coord(double x, int) const noexcept {
    const double scaled = std::floor(x / cell_);
    if (scaled > 4e18) return std::numeric_limits<long>::max() / 4;
    if (scaled < -4e18) return std::numeric_limits<long>::min() / 4;
    return static_cast<long>(scaled);
}

} // namespace greeks
