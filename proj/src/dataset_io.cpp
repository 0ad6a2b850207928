#include "beamsel/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "beamsel/errors.hpp"

namespace beamsel {

using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string record_to_json(const DatasetRecord& rec) {
    json j;
    j["id"] = rec.id;
    json cloud = json::array();
    for (const Vec3& p : rec.cloud) cloud.push_back({p.x, p.y, p.z});
    j["cloud"] = std::move(cloud);
    j["veh"] = {rec.veh.x, rec.veh.y, rec.veh.z};
    j["bs"] = {rec.bs.x, rec.bs.y, rec.bs.z};
    j["los"] = rec.los;
    j["y"] = rec.y;
    j["best"] = rec.best;
    j["degenerate"] = rec.degenerate;
    return j.dump();
}

DatasetRecord record_from_json(const std::string& line) {
    json j = json::parse(line);
    DatasetRecord rec;
    rec.id = j.at("id").get<int>();
    for (const auto& p : j.at("cloud")) {
        rec.cloud.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    }
    auto v = j.at("veh");
    rec.veh = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
    auto b = j.at("bs");
    rec.bs = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>()};
    rec.los = j.at("los").get<bool>();
    rec.y = j.at("y").get<std::vector<double>>();
    rec.best = j.at("best").get<int>();
    rec.degenerate = j.at("degenerate").get<bool>();
    return rec;
}

void write_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
    std::ostringstream os;
    for (const DatasetRecord& rec : records) os << record_to_json(rec) << "\n";
    write_file_atomic(path, os.str());
}

std::vector<DatasetRecord> read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::vector<DatasetRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(record_from_json(line));
        } catch (const json::exception& e) {
            throw IoError("dataset " + path + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return records;
}

DatasetMeta summarize_dataset(const std::vector<DatasetRecord>& records) {
    DatasetMeta meta;
    meta.records = static_cast<int>(records.size());
    for (const DatasetRecord& r : records) {
        if (r.los) ++meta.los_count;
        if (r.degenerate) ++meta.degenerate_count;
    }
    meta.nlos_fraction =
        records.empty() ? 0.0
                        : static_cast<double>(meta.records - meta.los_count) / meta.records;
    return meta;
}

std::string meta_path_for(const std::string& dataset_path) {
    std::filesystem::path p(dataset_path);
    p.replace_extension();
    return p.string() + ".meta.json";
}

void write_dataset_meta(const std::string& dataset_path, const DatasetMeta& meta) {
    json j;
    j["records"] = meta.records;
    j["los_count"] = meta.los_count;
    j["nlos_fraction"] = meta.nlos_fraction;
    j["degenerate_count"] = meta.degenerate_count;
    write_file_atomic(meta_path_for(dataset_path), j.dump(2) + "\n");
}

void write_grid_cache(const std::string& path, const std::vector<int>& ids,
                      const std::vector<Grid>& grids) {
    if (ids.size() != grids.size()) throw ConfigError("grid cache: id/grid count mismatch");
    std::ostringstream os;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        json j;
        j["id"] = ids[k];
        j["rows"] = grids[k].rows;
        j["cols"] = grids[k].cols;
        std::vector<int> flat(grids[k].v.begin(), grids[k].v.end());
        j["grid"] = std::move(flat);
        os << j.dump() << "\n";
    }
    write_file_atomic(path, os.str());
}

std::vector<std::pair<int, Grid>> read_grid_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grid cache: " + path);
    std::vector<std::pair<int, Grid>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Grid g(j.at("rows").get<int>(), j.at("cols").get<int>());
        auto flat = j.at("grid").get<std::vector<int>>();
        if (flat.size() != g.v.size()) throw IoError("grid cache: flat length mismatch in " + path);
        for (std::size_t i = 0; i < flat.size(); ++i) g.v[i] = static_cast<std::int8_t>(flat[i]);
        out.emplace_back(j.at("id").get<int>(), std::move(g));
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("rename failed for " + path + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace beamsel
