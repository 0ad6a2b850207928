#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "beamsel/geometry.hpp"

namespace beamsel {

// Synthetic urban V2I scene generator, LIDAR caster, geometric path tracer
// and codebook gain labeler. Scenes are pure functions of (config, seed).

struct SceneConfig {
    double area_x = 200.0;  // along-street extent (m)
    double area_y = 40.0;   // cross-street extent (m)

    int building_count_min = 3;
    int building_count_max = 8;
    double building_len_min = 8.0, building_len_max = 30.0;   // along x
    double building_wid_min = 6.0, building_wid_max = 16.0;   // along y
    double building_hgt_min = 6.0, building_hgt_max = 18.0;

    int vehicle_count_min = 1;  // obstacle vehicles, excluding the target
    int vehicle_count_max = 6;
    double vehicle_len = 4.6, vehicle_wid = 1.8, vehicle_hgt = 1.5;

    // Placement region for the target vehicle's center.
    double target_x_min = 10.0, target_x_max = 190.0;
    double target_y_min = 14.0, target_y_max = 34.0;

    // Fixed BS pose on the street curb.
    double bs_x = 100.0, bs_y = 1.0, bs_z = 6.0;

    // Obstacle vehicles drive in this cross-street band.
    double street_y_min = 10.0, street_y_max = 36.0;

    double antenna_height = 1.6;  // target antenna above ground

    void validate() const;
};

struct Scene {
    Vec3 bs;
    std::vector<Box> obstacles;  // buildings then vehicles
    int building_count = 0;      // obstacles[0..building_count) are buildings
    Box target_box;
    Vec3 antenna;
};

struct LidarSpec {
    double azimuth_step_deg = 1.0;
    std::vector<double> elevation_deg = {-15.0, -10.0, -5.0, 0.0, 5.0};
    double max_range = 150.0;
};

struct ChannelConfig {
    int n_subcarriers = 4;
    double wavelength = 0.005;         // 60 GHz carrier
    double bounce_loss_db = 6.0;       // power loss per reflection
    double subcarrier_spacing = 2e6;   // Hz

    void validate() const;
};

// One propagation path. Angles are stored as direction cosines along the
// array axis (the street direction): departure measured at the BS array,
// arrival at the vehicle array.
struct PathEntry {
    std::complex<double> gain;
    double aod_cos = 0.0;
    double aoa_cos = 0.0;
    double delay = 0.0;  // seconds
    int bounces = 0;
};

struct PathList {
    std::vector<PathEntry> paths;
    bool los = false;  // true iff a zero-bounce path is present
};

// Fixed complex beam codebook on a half-wavelength ULA.
struct Codebook {
    enum class Role { Transmit, Receive };
    Role role = Role::Transmit;
    int elements = 0;
    // beams[i][m]: unit-norm steering weights.
    std::vector<std::vector<std::complex<double>>> beams;

    static Codebook dft(Role role, int elements);
    int size() const { return static_cast<int>(beams.size()); }
};

// ULA steering vector entry m for a wave at direction cosine c.
inline std::complex<double> ula_phase(int m, double dir_cos) {
    const double arg = M_PI * m * dir_cos;
    return {std::cos(arg), std::sin(arg)};
}

struct CMatrix {
    int rows = 0, cols = 0;
    std::vector<std::complex<double>> a;

    CMatrix() = default;
    CMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c) {}
    std::complex<double>& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    const std::complex<double>& at(int r, int c) const {
        return a[static_cast<std::size_t>(r) * cols + c];
    }
};

struct GainMatrix {
    int nt = 0, nr = 0;
    std::vector<double> g;  // row-major [nt][nr]

    GainMatrix() = default;
    GainMatrix(int t, int r) : nt(t), nr(r), g(static_cast<std::size_t>(t) * r, 0.0) {}
    double& at(int i, int j) { return g[static_cast<std::size_t>(i) * nr + j]; }
    double at(int i, int j) const { return g[static_cast<std::size_t>(i) * nr + j]; }
};

struct DatasetRecord {
    int id = 0;
    std::vector<Vec3> cloud;
    Vec3 veh;
    Vec3 bs;
    bool los = false;
    std::vector<double> y;  // flattened gain vector, y[i*nr + j] = G(i,j)
    int best = 0;
    bool degenerate = false;
};

Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

// One point per ray whose first box intersection lies within range. The
// sensor sits at the target antenna; the target's own box is not scanned.
std::vector<Vec3> cast_lidar(const Scene& scene, const LidarSpec& spec);

// Direct path plus single-bounce specular reflections off building facades,
// found by mirror-image construction. Blocked combinations are omitted; an
// empty list means a fully blocked scene.
PathList trace_paths(const Scene& scene, const ChannelConfig& config);

// H_n = sum_p gain_p * exp(-j 2 pi n df tau_p) * a_r(aoa) a_t(aod)^H.
CMatrix channel_response(const PathList& paths, const ChannelConfig& config, int subcarrier,
                         int n_rx, int n_tx);

// G(i,j) = sum_n |w_j^H H_n f_i|^2.
GainMatrix gain_matrix(const std::vector<CMatrix>& h, const Codebook& ct, const Codebook& cr);

// Argmax under the flat ordering y[i*nr+j]; ties break toward the lowest
// flat index. An all-zero matrix yields index 0 with *degenerate set.
int best_beam(const GainMatrix& g, bool* degenerate = nullptr);

std::vector<double> flatten_gains(const GainMatrix& g);
GainMatrix unflatten_gains(const std::vector<double>& y, int nt, int nr);

DatasetRecord make_record(const SceneConfig& scfg, const ChannelConfig& ccfg,
                          const LidarSpec& lidar, const Codebook& ct, const Codebook& cr, int id,
                          std::uint64_t seed_base);

std::vector<DatasetRecord> generate_dataset(const SceneConfig& scfg, const ChannelConfig& ccfg,
                                            const LidarSpec& lidar, const Codebook& ct,
                                            const Codebook& cr, int count, std::uint64_t seed_base,
                                            int first_id = 0);

// Geometric LOS oracle: true iff the BS->antenna segment crosses no obstacle.
bool has_line_of_sight(const Scene& scene);

}  // namespace beamsel
