#pragma once

#include <string>
#include <vector>

#include "beamsel/lidar_grid.hpp"
#include "beamsel/scenario.hpp"

namespace beamsel {

// JSON Lines dataset files, one record per line with fields
// id, cloud, veh, bs, los, y, best, degenerate. Floats carry full
// round-trip precision.

std::string record_to_json(const DatasetRecord& rec);
DatasetRecord record_from_json(const std::string& line);

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(const std::string& path);

struct DatasetMeta {
    int records = 0;
    int los_count = 0;
    int degenerate_count = 0;
    double nlos_fraction = 0.0;
};

DatasetMeta summarize_dataset(const std::vector<DatasetRecord>& records);
void write_dataset_meta(const std::string& dataset_path, const DatasetMeta& meta);
// Sidecar path for a dataset file: extension replaced by ".meta.json".
std::string meta_path_for(const std::string& dataset_path);

// Preprocessed-grid cache: JSON Lines of {id, rows, cols, grid}.
void write_grid_cache(const std::string& path, const std::vector<int>& ids,
                      const std::vector<Grid>& grids);
std::vector<std::pair<int, Grid>> read_grid_cache(const std::string& path);

// Writes via a temporary file plus rename so failures leave no partial output.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Shortest round-trip decimal form of a double (CSV cells, report lines).
std::string format_double(double v);

}  // namespace beamsel
