#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "beamsel/geometry.hpp"
#include "beamsel/tensor.hpp"

namespace beamsel {

// 2D occupancy discretization of the coverage area. Cell values: 1 occupied,
// 0 free, -1 BS marker, -2 vehicle marker.

struct GridSpec {
    double origin_x = 0.0, origin_y = 0.0;
    double cell_x = 1.0, cell_y = 2.0;  // meters per cell along each axis
    int rows = 200, cols = 20;          // rows bin x, cols bin y

    void validate() const;
};

struct Grid {
    int rows = 0, cols = 0;
    std::vector<std::int8_t> v;

    Grid() = default;
    Grid(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0) {}
    std::int8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::int8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

struct Cell {
    int row = 0, col = 0;
    bool operator==(const Cell&) const = default;
};

// Half-open binning: a coordinate exactly on a cell's upper boundary belongs
// to the next cell. Returns nothing for out-of-area points.
std::optional<Cell> cell_of(double x, double y, const GridSpec& spec);

// Occupancy from the (x,y) projection of the cloud, then the BS cell is set
// to -1 and the vehicle cell to -2. Markers override occupancy; the vehicle
// marker wins when both land in one cell. BS or vehicle outside the area is
// an invalid record.
Grid preprocess_cloud(const std::vector<Vec3>& cloud, const Vec3& bs, const Vec3& veh,
                      const GridSpec& spec);

// [1, rows, cols] tensor view of the grid values.
Tensor grid_to_tensor(const Grid& grid);

}  // namespace beamsel
