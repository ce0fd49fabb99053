#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace greeks {

/// Uniform cell list over points in R^D for exact fixed-radius queries.
///
/// Points are copied into cell order so a query walks contiguous memory.
/// Construction fails (usable() == false) when the cell extents do not fit
/// the packed 64-bit key; callers then fall back to a full scan.
class NeighborGrid {
public:
    /// `points` is row-major N x dim.
    NeighborGrid(std::span<const double> points, int dim, double cell_size);

    bool usable() const noexcept { return usable_; }
    int dim() const noexcept { return dim_; }
    double cell_size() const noexcept { return cell_; }

    /// Calls visit(original_index, coords_ptr) for every stored point whose
    /// cell lies within `reach` cells of the query's cell in every coordinate.
    /// Visits a superset of the points within distance reach * cell_size.
    template <class Visit>
    void for_each_candidate(const double* query, int reach, Visit&& visit) const {
        long base[8];
        for (int k = 0; k < dim_; ++k) base[k] = cell_coord(query[k], k);
        long offset[8];
        for (int k = 0; k < dim_; ++k) offset[k] = -reach;
        for (;;) {
            bool inside = true;
            std::uint64_t key = 0;
            for (int k = 0; k < dim_; ++k) {
                const long c = base[k] + offset[k] - min_cell_[k];
                if (c < 0 || c >= extent_[k]) {
                    inside = false;
                    break;
                }
                key = key * static_cast<std::uint64_t>(extent_[k]) + static_cast<std::uint64_t>(c);
            }
            if (inside) {
                const auto it = cells_.find(key);
                if (it != cells_.end()) {
                    for (std::uint32_t p = it->second.first; p < it->second.second; ++p)
                        visit(static_cast<std::size_t>(index_[p]), &coords_[static_cast<std::size_t>(p) * dim_]);
                }
            }
            int k = dim_ - 1;
            while (k >= 0 && offset[k] == reach) {
                offset[k] = -reach;
                --k;
            }
            if (k < 0) break;
            ++offset[k];
        }
    }

private:
    long cell_coord(double x, int k) const noexcept;

    int dim_;
    double cell_;
    bool usable_ = false;
    std::vector<long> min_cell_;
    std::vector<long> extent_;
    std::vector<double> coords_;
    std::vector<std::uint32_t> index_;
    std::unordered_map<std::uint64_t, std::pair<std::uint32_t, std::uint32_t>> cells_;
};

} // namespace greeks
