#include "beamsel/lidar_grid.hpp"

#include <cmath>

#include "beamsel/errors.hpp"

namespace beamsel {

void GridSpec::validate() const {
    if (cell_x <= 0 || cell_y <= 0) throw ConfigError("grid: cell sizes must be positive");
    if (rows <= 0 || cols <= 0) throw ConfigError("grid: extents must be positive");
}

std::optional<Cell> cell_of(double x, double y, const GridSpec& spec) {
    spec.validate();
    if (!std::isfinite(x) || !std::isfinite(y)) throw ConfigError("cell_of: non-finite coordinates");
    const double fx = std::floor((x - spec.origin_x) / spec.cell_x);
    const double fy = std::floor((y - spec.origin_y) / spec.cell_y);
    if (fx < 0 || fx >= spec.rows || fy < 0 || fy >= spec.cols) return std::nullopt;
    return Cell{static_cast<int>(fx), static_cast<int>(fy)};
}

Grid preprocess_cloud(const std::vector<Vec3>& cloud, const Vec3& bs, const Vec3& veh,
                      const GridSpec& spec) {
    spec.validate();
    const auto bs_cell = cell_of(bs.x, bs.y, spec);
    const auto veh_cell = cell_of(veh.x, veh.y, spec);
    if (!bs_cell) throw ConfigError("preprocess: BS position outside the coverage area");
    if (!veh_cell) throw ConfigError("preprocess: vehicle position outside the coverage area");

    Grid grid(spec.rows, spec.cols);
    for (const Vec3& p : cloud) {
        // z is discarded; out-of-area returns are dropped.
        if (auto c = cell_of(p.x, p.y, spec)) grid.at(c->row, c->col) = 1;
    }
    grid.at(bs_cell->row, bs_cell->col) = -1;
    grid.at(veh_cell->row, veh_cell->col) = -2;
    return grid;
}

Tensor grid_to_tensor(const Grid& grid) {
    Tensor t = Tensor::zeros({1, grid.rows, grid.cols});
    for (std::size_t i = 0; i < grid.v.size(); ++i) t.data[i] = static_cast<double>(grid.v[i]);
    return t;
}

}  // namespace beamsel
