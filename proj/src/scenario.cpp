#include "beamsel/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "beamsel/errors.hpp"
#include "beamsel/rng.hpp"

namespace beamsel {

namespace {

constexpr double kSpeedOfLight = 299792458.0;

// Blockage test against every obstacle box, skipping one index (the
// reflecting box checks its own legs with clipped endpoints instead).
bool blocked(const Scene& scene, const Vec3& a, const Vec3& b, int skip = -1) {
    for (std::size_t k = 0; k < scene.obstacles.size(); ++k) {
        if (static_cast<int>(k) == skip) continue;
        if (segment_blocked(a, b, scene.obstacles[k])) return true;
    }
    return false;
}

}  // namespace

void SceneConfig::validate() const {
    if (area_x <= 0 || area_y <= 0) throw ConfigError("scene: area extents must be positive");
    if (building_count_min < 0 || building_count_max < building_count_min)
        throw ConfigError("scene: invalid building count range");
    if (vehicle_count_min < 0 || vehicle_count_max < vehicle_count_min)
        throw ConfigError("scene: invalid vehicle count range");
    if (building_len_min <= 0 || building_len_max < building_len_min ||
        building_wid_min <= 0 || building_wid_max < building_wid_min ||
        building_hgt_min <= 0 || building_hgt_max < building_hgt_min)
        throw ConfigError("scene: invalid building size range");
    if (vehicle_len <= 0 || vehicle_wid <= 0 || vehicle_hgt <= 0)
        throw ConfigError("scene: vehicle dimensions must be positive");
    if (target_x_min > target_x_max || target_y_min > target_y_max)
        throw ConfigError("scene: empty target placement region");
    if (target_x_min - vehicle_len / 2 < 0 || target_x_max + vehicle_len / 2 > area_x ||
        target_y_min - vehicle_wid / 2 < 0 || target_y_max + vehicle_wid / 2 > area_y)
        throw ConfigError("scene: target region too small or outside the coverage area");
    if (bs_x < 0 || bs_x > area_x || bs_y < 0 || bs_y > area_y || bs_z <= 0)
        throw ConfigError("scene: BS must be inside the coverage area above ground");
    if (street_y_min >= street_y_max || street_y_min < 0 || street_y_max > area_y)
        throw ConfigError("scene: street band must be a nonempty slice of the coverage area");
    if (antenna_height <= 0 || antenna_height > vehicle_hgt + 0.5)
        throw ConfigError("scene: antenna height must sit on the vehicle");
}

void ChannelConfig::validate() const {
    if (n_subcarriers < 1) throw ConfigError("channel: need at least one subcarrier");
    if (wavelength <= 0) throw ConfigError("channel: wavelength must be positive");
    if (subcarrier_spacing <= 0) throw ConfigError("channel: subcarrier spacing must be positive");
    if (bounce_loss_db < 0) throw ConfigError("channel: bounce loss must be nonnegative");
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(mix_seed(seed, 0x5ce9e));

    Scene scene;
    scene.bs = {config.bs_x, config.bs_y, config.bs_z};

    // Target vehicle first; obstacles avoid it and the BS.
    const double tx = rng.uniform(config.target_x_min, config.target_x_max);
    const double ty = rng.uniform(config.target_y_min, config.target_y_max);
    scene.target_box = {{tx - config.vehicle_len / 2, ty - config.vehicle_wid / 2, 0.0},
                        {tx + config.vehicle_len / 2, ty + config.vehicle_wid / 2,
                         config.vehicle_hgt}};
    scene.antenna = {tx, ty, config.antenna_height};

    const int n_build =
        static_cast<int>(rng.uniform_int(config.building_count_min, config.building_count_max));
    int placed = 0;
    int attempts = 0;
    while (placed < n_build && attempts < n_build * 50) {
        ++attempts;
        const double lx = rng.uniform(config.building_len_min, config.building_len_max);
        const double ly = rng.uniform(config.building_wid_min, config.building_wid_max);
        const double lz = rng.uniform(config.building_hgt_min, config.building_hgt_max);
        const double cx = rng.uniform(lx / 2, config.area_x - lx / 2);
        const double cy = rng.uniform(ly / 2, config.area_y - ly / 2);
        Box b{{cx - lx / 2, cy - ly / 2, 0.0}, {cx + lx / 2, cy + ly / 2, lz}};
        if (b.contains(scene.bs) || b.overlaps(scene.target_box)) continue;
        scene.obstacles.push_back(b);
        ++placed;
    }
    scene.building_count = placed;

    const int n_veh =
        static_cast<int>(rng.uniform_int(config.vehicle_count_min, config.vehicle_count_max));
    placed = 0;
    attempts = 0;
    while (placed < n_veh && attempts < n_veh * 50) {
        ++attempts;
        const double cx =
            rng.uniform(config.vehicle_len / 2, config.area_x - config.vehicle_len / 2);
        const double cy = rng.uniform(std::max(config.street_y_min, config.vehicle_wid / 2),
                                      std::min(config.street_y_max,
                                               config.area_y - config.vehicle_wid / 2));
        Box b{{cx - config.vehicle_len / 2, cy - config.vehicle_wid / 2, 0.0},
              {cx + config.vehicle_len / 2, cy + config.vehicle_wid / 2, config.vehicle_hgt}};
        if (b.contains(scene.bs) || b.overlaps(scene.target_box)) continue;
        scene.obstacles.push_back(b);
        ++placed;
    }
    return scene;
}

std::vector<Vec3> cast_lidar(const Scene& scene, const LidarSpec& spec) {
    if (spec.azimuth_step_deg <= 0) throw ConfigError("lidar: azimuth step must be positive");
    std::vector<Vec3> cloud;
    const Vec3 origin = scene.antenna;
    const int n_az = static_cast<int>(std::floor(360.0 / spec.azimuth_step_deg));
    for (double elev_deg : spec.elevation_deg) {
        const double el = elev_deg * M_PI / 180.0;
        const double ce = std::cos(el), se = std::sin(el);
        for (int ia = 0; ia < n_az; ++ia) {
            const double az = ia * spec.azimuth_step_deg * M_PI / 180.0;
            const Vec3 dir{ce * std::cos(az), ce * std::sin(az), se};
            double best_t = spec.max_range;
            bool hit = false;
            for (const Box& b : scene.obstacles) {
                auto t = ray_box_hit(origin, dir, b);
                if (t && *t > 1e-9 && *t < best_t) {
                    best_t = *t;
                    hit = true;
                }
            }
            if (hit) cloud.push_back(origin + dir * best_t);
        }
    }
    return cloud;
}

bool has_line_of_sight(const Scene& scene) { return !blocked(scene, scene.bs, scene.antenna); }

PathList trace_paths(const Scene& scene, const ChannelConfig& config) {
    config.validate();
    PathList out;
    const Vec3 bs = scene.bs;
    const Vec3 rx = scene.antenna;
    const double amp_per_bounce = std::pow(10.0, -config.bounce_loss_db / 20.0);

    auto push_path = [&](const Vec3& depart_towards, const Vec3& arrive_from, double length,
                         int bounces) {
        PathEntry p;
        const double amp =
            config.wavelength / (4.0 * M_PI * length) * std::pow(amp_per_bounce, bounces);
        const double phase = -2.0 * M_PI * length / config.wavelength;
        p.gain = std::polar(amp, phase);
        p.delay = length / kSpeedOfLight;
        p.bounces = bounces;
        p.aod_cos = (depart_towards - bs).normalized().x;
        p.aoa_cos = (arrive_from - rx).normalized().x;
        out.paths.push_back(p);
    };

    if (!blocked(scene, bs, rx)) {
        push_path(rx, bs, distance(bs, rx), 0);
        out.los = true;
    }

    // Single-bounce specular reflections off vertical building facades via
    // the image method: mirror the BS across the facade plane; the straight
    // mirror-to-receiver segment locates the reflection point.
    for (int k = 0; k < scene.building_count; ++k) {
        const Box& b = scene.obstacles[k];
        struct Facade {
            int axis;       // 0: plane x = value, 1: plane y = value
            double value;
            double sign;    // outward normal direction along the axis
        };
        const Facade facades[4] = {{0, b.lo.x, -1.0},
                                   {0, b.hi.x, +1.0},
                                   {1, b.lo.y, -1.0},
                                   {1, b.hi.y, +1.0}};
        for (const Facade& f : facades) {
            const double bs_side = (f.axis == 0 ? bs.x : bs.y) - f.value;
            const double rx_side = (f.axis == 0 ? rx.x : rx.y) - f.value;
            // Both ends must lie strictly on the outward side of the plane.
            if (bs_side * f.sign <= 0 || rx_side * f.sign <= 0) continue;

            Vec3 mirror = bs;
            if (f.axis == 0) mirror.x = 2 * f.value - bs.x;
            else mirror.y = 2 * f.value - bs.y;

            const Vec3 seg = rx - mirror;
            const double denom = f.axis == 0 ? seg.x : seg.y;
            if (denom == 0.0) continue;
            const double t = (f.value - (f.axis == 0 ? mirror.x : mirror.y)) / denom;
            if (t <= 0.0 || t >= 1.0) continue;
            const Vec3 p = mirror + seg * t;

            // Reflection point must land on the facade rectangle.
            if (f.axis == 0) {
                if (p.y < b.lo.y || p.y > b.hi.y || p.z < b.lo.z || p.z > b.hi.z) continue;
            } else {
                if (p.x < b.lo.x || p.x > b.hi.x || p.z < b.lo.z || p.z > b.hi.z) continue;
            }

            // Both legs clear of everything else; they can only touch the
            // reflecting box at p itself, which endpoint contact permits.
            if (blocked(scene, bs, p, k) || blocked(scene, p, rx, k)) continue;

            const double length = distance(bs, p) + distance(p, rx);
            push_path(p, p, length, 1);
        }
    }
    return out;
}

Codebook Codebook::dft(Role role, int elements) {
    if (elements < 1) throw ConfigError("codebook: element count must be positive");
    Codebook cb;
    cb.role = role;
    cb.elements = elements;
    cb.beams.resize(elements);
    const double norm = 1.0 / std::sqrt(static_cast<double>(elements));
    for (int i = 0; i < elements; ++i) {
        cb.beams[i].resize(elements);
        const double dir_cos = -1.0 + 2.0 * i / elements;
        for (int m = 0; m < elements; ++m) cb.beams[i][m] = ula_phase(m, dir_cos) * norm;
    }
    return cb;
}

CMatrix channel_response(const PathList& paths, const ChannelConfig& config, int subcarrier,
                         int n_rx, int n_tx) {
    config.validate();
    if (subcarrier < 0 || subcarrier >= config.n_subcarriers)
        throw ConfigError("channel: subcarrier index out of range");
    CMatrix h(n_rx, n_tx);
    for (const PathEntry& p : paths.paths) {
        const double arg = -2.0 * M_PI * subcarrier * config.subcarrier_spacing * p.delay;
        const std::complex<double> coeff = p.gain * std::complex<double>(std::cos(arg), std::sin(arg));
        for (int r = 0; r < n_rx; ++r) {
            const std::complex<double> ar = ula_phase(r, p.aoa_cos);
            for (int t = 0; t < n_tx; ++t) {
                h.at(r, t) += coeff * ar * std::conj(ula_phase(t, p.aod_cos));
            }
        }
    }
    return h;
}

GainMatrix gain_matrix(const std::vector<CMatrix>& h, const Codebook& ct, const Codebook& cr) {
    if (h.empty()) throw ConfigError("gain_matrix: no channel matrices");
    const int nt = ct.size(), nr = cr.size();
    for (const CMatrix& hn : h) {
        if (hn.rows != cr.elements || hn.cols != ct.elements) {
            throw ShapeError("gain_matrix: channel is " + std::to_string(hn.rows) + "x" +
                             std::to_string(hn.cols) + ", codebooks expect " +
                             std::to_string(cr.elements) + "x" + std::to_string(ct.elements));
        }
    }
    GainMatrix g(nt, nr);
    std::vector<std::complex<double>> hf(static_cast<std::size_t>(cr.elements));
    for (const CMatrix& hn : h) {
        for (int i = 0; i < nt; ++i) {
            for (int r = 0; r < hn.rows; ++r) {
                std::complex<double> acc = 0.0;
                for (int c = 0; c < hn.cols; ++c) acc += hn.at(r, c) * ct.beams[i][c];
                hf[r] = acc;
            }
            for (int j = 0; j < nr; ++j) {
                std::complex<double> acc = 0.0;
                for (int r = 0; r < hn.rows; ++r) acc += std::conj(cr.beams[j][r]) * hf[r];
                g.at(i, j) += std::norm(acc);
            }
        }
    }
    return g;
}

int best_beam(const GainMatrix& g, bool* degenerate) {
    if (g.g.empty()) throw ConfigError("best_beam: empty gain matrix");
    int best = 0;
    double best_val = g.g[0];
    for (std::size_t k = 1; k < g.g.size(); ++k) {
        if (g.g[k] > best_val) {
            best_val = g.g[k];
            best = static_cast<int>(k);
        }
    }
    if (degenerate) *degenerate = (best_val <= 0.0);
    return best;
}

std::vector<double> flatten_gains(const GainMatrix& g) { return g.g; }

GainMatrix unflatten_gains(const std::vector<double>& y, int nt, int nr) {
    if (y.size() != static_cast<std::size_t>(nt) * nr)
        throw ShapeError("unflatten_gains: length mismatch");
    GainMatrix g(nt, nr);
    g.g = y;
    return g;
}

DatasetRecord make_record(const SceneConfig& scfg, const ChannelConfig& ccfg,
                          const LidarSpec& lidar, const Codebook& ct, const Codebook& cr, int id,
                          std::uint64_t seed_base) {
    Scene scene = generate_scene(scfg, mix_seed(seed_base, static_cast<std::uint64_t>(id)));
    DatasetRecord rec;
    rec.id = id;
    rec.cloud = cast_lidar(scene, lidar);
    rec.veh = scene.antenna;
    rec.bs = scene.bs;

    PathList paths = trace_paths(scene, ccfg);
    rec.los = paths.los;

    std::vector<CMatrix> h;
    h.reserve(ccfg.n_subcarriers);
    for (int n = 0; n < ccfg.n_subcarriers; ++n)
        h.push_back(channel_response(paths, ccfg, n, cr.elements, ct.elements));
    GainMatrix g = gain_matrix(h, ct, cr);
    rec.y = flatten_gains(g);
    rec.best = best_beam(g, &rec.degenerate);
    return rec;
}

std::vector<DatasetRecord> generate_dataset(const SceneConfig& scfg, const ChannelConfig& ccfg,
                                            const LidarSpec& lidar, const Codebook& ct,
                                            const Codebook& cr, int count, std::uint64_t seed_base,
                                            int first_id) {
    if (count < 1) throw ConfigError("generate_dataset: scene count must be >= 1");
    std::vector<DatasetRecord> records;
    records.reserve(count);
    for (int k = 0; k < count; ++k)
        records.push_back(make_record(scfg, ccfg, lidar, ct, cr, first_id + k, seed_base));
    return records;
}

}  // namespace beamsel
