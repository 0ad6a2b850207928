#include "beamsel/model.hpp"

#include <cmath>

#include <json.hpp>

#include "beamsel/dataset_io.hpp"
#include "beamsel/errors.hpp"
#include "beamsel/rng.hpp"

namespace beamsel {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "beamsel-checkpoint-v1";

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Fan-in scaled uniform init, one independent stream per tensor name.
Tensor uniform_init(const std::vector<int>& shape, int fan_in, std::uint64_t seed,
                    const std::string& name) {
    Tensor t = Tensor::zeros(shape);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng(mix_seed(seed, fnv1a(name)));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

struct StageShape {
    int c, h, w;
};

}  // namespace

std::string to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::EmbeddedGaussian: return "embedded";
        case AttentionVariant::Gaussian: return "gaussian";
        case AttentionVariant::Dot: return "dot";
    }
    return "embedded";
}

AttentionVariant attention_variant_from_string(const std::string& s) {
    if (s == "embedded") return AttentionVariant::EmbeddedGaussian;
    if (s == "gaussian") return AttentionVariant::Gaussian;
    if (s == "dot") return AttentionVariant::Dot;
    throw ConfigError("unknown attention variant: " + s);
}

void ModelConfig::validate() const {
    if (grid_rows <= 0 || grid_cols <= 0) throw ConfigError("model: grid extents must be positive");
    if (convs.size() < 2) throw ConfigError("model: need at least two convolution layers");
    int c = 1, h = grid_rows, w = grid_cols;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const ConvSpec& cs = convs[i];
        if (cs.out_channels < 1 || cs.kernel < 1 || cs.kernel % 2 == 0 || cs.stride < 1 ||
            cs.padding < 0) {
            throw ConfigError("model: conv" + std::to_string(i + 1) + " has an invalid spec");
        }
        const int ho = (h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        const int wo = (w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        if (ho < 1 || wo < 1) {
            throw ConfigError("model: conv" + std::to_string(i + 1) + " output collapses on a " +
                              std::to_string(h) + "x" + std::to_string(w) + " input");
        }
        c = cs.out_channels;
        h = ho;
        w = wo;
        if (i + 2 == convs.size()) {
            // Standalone pooling sits before the last convolution.
            if (pool_h < 1 || pool_w < 1 || h / pool_h < 1 || w / pool_w < 1) {
                throw ConfigError("model: pooling window exceeds the conv" + std::to_string(i + 1) +
                                  " output " + std::to_string(h) + "x" + std::to_string(w));
            }
            h /= pool_h;
            w /= pool_w;
        }
    }
    if (fc1_out < 1 || outputs < 2) throw ConfigError("model: invalid linear widths");
    for (int width : hidden) {
        if (width < 1) throw ConfigError("model: invalid hidden width");
    }
    if (attention.enabled) {
        if (attention.inter_channels < 1) throw ConfigError("model: attention width must be >= 1");
        if (attention.kv_pool_h < 1 || attention.kv_pool_w < 1)
            throw ConfigError("model: attention pooling factors must be >= 1");
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["grid_rows"] = grid_rows;
    j["grid_cols"] = grid_cols;
    json convs_j = json::array();
    for (const ConvSpec& c : convs) {
        convs_j.push_back({{"out", c.out_channels}, {"k", c.kernel}, {"s", c.stride}, {"p", c.padding}});
    }
    j["convs"] = std::move(convs_j);
    j["pool_h"] = pool_h;
    j["pool_w"] = pool_w;
    j["fc1_out"] = fc1_out;
    j["hidden"] = hidden;
    j["outputs"] = outputs;
    j["attention"] = {{"enabled", attention.enabled},
                      {"variant", to_string(attention.variant)},
                      {"inter_channels", attention.inter_channels},
                      {"kv_pool_h", attention.kv_pool_h},
                      {"kv_pool_w", attention.kv_pool_w},
                      {"pool_before", attention.pool_before}};
    j["init_seed"] = init_seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig cfg;
    cfg.grid_rows = j.value("grid_rows", cfg.grid_rows);
    cfg.grid_cols = j.value("grid_cols", cfg.grid_cols);
    if (j.contains("convs")) {
        cfg.convs.clear();
        for (const auto& c : j["convs"]) {
            cfg.convs.push_back({c.at("out").get<int>(), c.at("k").get<int>(), c.at("s").get<int>(),
                                 c.at("p").get<int>()});
        }
    }
    cfg.pool_h = j.value("pool_h", cfg.pool_h);
    cfg.pool_w = j.value("pool_w", cfg.pool_w);
    cfg.fc1_out = j.value("fc1_out", cfg.fc1_out);
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<std::vector<int>>();
    cfg.outputs = j.value("outputs", cfg.outputs);
    if (j.contains("attention")) {
        const auto& a = j["attention"];
        cfg.attention.enabled = a.value("enabled", cfg.attention.enabled);
        if (a.contains("variant"))
            cfg.attention.variant = attention_variant_from_string(a["variant"].get<std::string>());
        cfg.attention.inter_channels = a.value("inter_channels", cfg.attention.inter_channels);
        cfg.attention.kv_pool_h = a.value("kv_pool_h", cfg.attention.kv_pool_h);
        cfg.attention.kv_pool_w = a.value("kv_pool_w", cfg.attention.kv_pool_w);
        cfg.attention.pool_before = a.value("pool_before", cfg.attention.pool_before);
    }
    cfg.init_seed = j.value("init_seed", cfg.init_seed);
    cfg.validate();
    return cfg;
}

void create_attention_params(ParamStore& store, const AttentionConfig& cfg, int channels,
                             std::uint64_t seed, const std::string& prefix) {
    const int d = cfg.inter_channels;
    if (cfg.variant == AttentionVariant::EmbeddedGaussian) {
        store.create(prefix + ".phi1", uniform_init({d, channels}, channels, seed, prefix + ".phi1"));
        store.create(prefix + ".phi2", uniform_init({d, channels}, channels, seed, prefix + ".phi2"));
    }
    store.create(prefix + ".psi", uniform_init({d, channels}, channels, seed, prefix + ".psi"));
    store.create(prefix + ".out", uniform_init({channels, d}, d, seed, prefix + ".out"));
}

Tape::NodeId nonlocal_forward(Tape& tape, Tape::NodeId input, const AttentionConfig& cfg,
                              const ParamStore& params, const std::string& prefix) {
    const Tensor& in = tape.value(input);
    if (in.rank() != 3) throw ShapeError("attention: expected [C,H,W] input");
    const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int n = h * w;

    const Tape::NodeId queries = tape.reshape(input, {c, n});

    // Keys/values optionally subsampled; queries keep full resolution.
    Tape::NodeId kv_src = input;
    int m = n;
    if (!cfg.pool_before && (cfg.kv_pool_h > 1 || cfg.kv_pool_w > 1) && h >= cfg.kv_pool_h &&
        w >= cfg.kv_pool_w) {
        kv_src = tape.maxpool2d(input, cfg.kv_pool_h, cfg.kv_pool_w);
        const Tensor& kv = tape.value(kv_src);
        m = kv.shape[1] * kv.shape[2];
    }
    const Tape::NodeId keys = tape.reshape(kv_src, {c, m});

    Tape::NodeId affinity;  // [n, m], normalized per Eq. row
    switch (cfg.variant) {
        case AttentionVariant::EmbeddedGaussian: {
            const Tape::NodeId q = tape.matmul(tape.param(params, prefix + ".phi1"), queries);
            const Tape::NodeId k = tape.matmul(tape.param(params, prefix + ".phi2"), keys);
            affinity = tape.row_softmax(tape.matmul(tape.transpose(q), k));
            break;
        }
        case AttentionVariant::Gaussian: {
            affinity = tape.row_softmax(tape.matmul(tape.transpose(queries), keys));
            break;
        }
        case AttentionVariant::Dot: {
            // Position-count normalization: eta = number of key positions.
            affinity = tape.scale(tape.matmul(tape.transpose(queries), keys), 1.0 / m);
            break;
        }
    }

    const Tape::NodeId values = tape.matmul(tape.param(params, prefix + ".psi"), keys);
    const Tape::NodeId mixed = tape.matmul(values, tape.transpose(affinity));  // [d, n]
    const Tape::NodeId projected = tape.matmul(tape.param(params, prefix + ".out"), mixed);
    return tape.add(input, tape.reshape(projected, {c, h, w}));
}

BeamClassifier BeamClassifier::init(const ModelConfig& config) {
    config.validate();
    BeamClassifier model;
    model.cfg_ = config;
    ParamStore& store = model.params_;
    const std::uint64_t seed = config.init_seed;

    int in_ch = 1;
    for (std::size_t i = 0; i < config.convs.size(); ++i) {
        const ConvSpec& cs = config.convs[i];
        const std::string name = "conv" + std::to_string(i + 1);
        const int fan_in = in_ch * cs.kernel * cs.kernel;
        store.create(name + ".weight",
                     uniform_init({cs.out_channels, in_ch, cs.kernel, cs.kernel}, fan_in, seed,
                                  name + ".weight"));
        store.create(name + ".bias", Tensor::zeros({cs.out_channels}));
        in_ch = cs.out_channels;
        if (config.attention.enabled && i + 2 == config.convs.size()) {
            create_attention_params(store, config.attention, in_ch, seed);
        }
    }

    // Flattened width after the last convolution.
    auto shapes = model.stage_shapes();
    const auto& last = shapes.back();
    int width = last[0] * last[1] * last[2];

    store.create("fc1.weight", uniform_init({config.fc1_out, width}, width, seed, "fc1.weight"));
    store.create("fc1.bias", Tensor::zeros({config.fc1_out}));
    int in_w = config.fc1_out + 2;  // concatenated (x, y) coordinates
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
        const std::string name = "fc" + std::to_string(i + 2);
        store.create(name + ".weight",
                     uniform_init({config.hidden[i], in_w}, in_w, seed, name + ".weight"));
        store.create(name + ".bias", Tensor::zeros({config.hidden[i]}));
        in_w = config.hidden[i];
    }
    const std::string out_name = "fc" + std::to_string(config.hidden.size() + 2);
    store.create(out_name + ".weight",
                 uniform_init({config.outputs, in_w}, in_w, seed, out_name + ".weight"));
    store.create(out_name + ".bias", Tensor::zeros({config.outputs}));
    return model;
}

std::vector<std::vector<int>> BeamClassifier::stage_shapes() const {
    std::vector<std::vector<int>> shapes;
    int c = 1, h = cfg_.grid_rows, w = cfg_.grid_cols;
    for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
        const ConvSpec& cs = cfg_.convs[i];
        h = (h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        w = (w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        c = cs.out_channels;
        shapes.push_back({c, h, w});
        if (i + 2 == cfg_.convs.size()) {
            if (cfg_.attention.enabled && !cfg_.attention.pool_before) shapes.push_back({c, h, w});
            h /= cfg_.pool_h;
            w /= cfg_.pool_w;
            shapes.push_back({c, h, w});
            if (cfg_.attention.enabled && cfg_.attention.pool_before) shapes.push_back({c, h, w});
        }
    }
    return shapes;
}

std::vector<int> BeamClassifier::conv5_shape() const {
    int c = 1, h = cfg_.grid_rows, w = cfg_.grid_cols;
    for (std::size_t i = 0; i + 1 < cfg_.convs.size(); ++i) {
        const ConvSpec& cs = cfg_.convs[i];
        h = (h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        w = (w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        c = cs.out_channels;
    }
    return {c, h, w};
}

Tape::NodeId BeamClassifier::forward(Tape& tape, const Grid& grid, double vx_norm,
                                     double vy_norm) const {
    if (grid.rows != cfg_.grid_rows || grid.cols != cfg_.grid_cols) {
        throw ShapeError("forward: grid is " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols) + ", model expects " +
                         std::to_string(cfg_.grid_rows) + "x" + std::to_string(cfg_.grid_cols));
    }
    Tape::NodeId x = tape.input(grid_to_tensor(grid));
    for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
        const std::string name = "conv" + std::to_string(i + 1);
        if (i + 1 == cfg_.convs.size()) {
            // Attention and pooling sit between the last two convolutions.
            if (cfg_.attention.enabled && !cfg_.attention.pool_before) {
                x = nonlocal_forward(tape, x, cfg_.attention, params_);
            }
            x = tape.maxpool2d(x, cfg_.pool_h, cfg_.pool_w);
            if (cfg_.attention.enabled && cfg_.attention.pool_before) {
                x = nonlocal_forward(tape, x, cfg_.attention, params_);
            }
        }
        x = tape.relu(tape.conv2d(x, tape.param(params_, name + ".weight"),
                                  tape.param(params_, name + ".bias"), cfg_.convs[i].stride,
                                  cfg_.convs[i].padding));
    }

    const Tensor& conv_out = tape.value(x);
    const int flat = conv_out.shape[0] * conv_out.shape[1] * conv_out.shape[2];
    x = tape.reshape(x, {flat});
    x = tape.relu(tape.linear(x, tape.param(params_, "fc1.weight"), tape.param(params_, "fc1.bias")));
    x = tape.concat(x, tape.input(Tensor::vec({vx_norm, vy_norm})));
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i) {
        const std::string name = "fc" + std::to_string(i + 2);
        x = tape.relu(tape.linear(x, tape.param(params_, name + ".weight"),
                                  tape.param(params_, name + ".bias")));
    }
    const std::string out_name = "fc" + std::to_string(cfg_.hidden.size() + 2);
    x = tape.linear(x, tape.param(params_, out_name + ".weight"),
                    tape.param(params_, out_name + ".bias"));
    return tape.softmax(x);
}

Tensor BeamClassifier::predict(const Grid& grid, double vx_norm, double vy_norm) const {
    Tape tape;
    return tape.value(forward(tape, grid, vx_norm, vy_norm));
}

std::size_t BeamClassifier::attention_flop_count() const {
    if (!cfg_.attention.enabled) return 0;
    auto c5 = conv5_shape();
    int c = c5[0], h = c5[1], w = c5[2];
    if (cfg_.attention.pool_before) {
        h /= cfg_.pool_h;
        w /= cfg_.pool_w;
    }
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::size_t m = n;
    std::size_t flops = 0;
    if (!cfg_.attention.pool_before && (cfg_.attention.kv_pool_h > 1 || cfg_.attention.kv_pool_w > 1)) {
        const int hk = h / cfg_.attention.kv_pool_h, wk = w / cfg_.attention.kv_pool_w;
        m = static_cast<std::size_t>(hk) * wk;
        flops += static_cast<std::size_t>(c) * m *
                 (cfg_.attention.kv_pool_h * cfg_.attention.kv_pool_w - 1);
    }
    const std::size_t d = static_cast<std::size_t>(cfg_.attention.inter_channels);
    const std::size_t cc = static_cast<std::size_t>(c);
    switch (cfg_.attention.variant) {
        case AttentionVariant::EmbeddedGaussian:
            flops += 2 * d * cc * n;      // phi1 projection
            flops += 2 * d * cc * m;      // phi2 projection
            flops += 2 * n * m * d;       // affinity scores
            flops += 4 * n * m;           // row softmax
            break;
        case AttentionVariant::Gaussian:
            flops += 2 * n * m * cc;
            flops += 4 * n * m;
            break;
        case AttentionVariant::Dot:
            flops += 2 * n * m * cc;
            flops += n * m;               // count normalization
            break;
    }
    flops += 2 * d * cc * m;  // psi projection
    flops += 2 * d * n * m;   // value aggregation
    flops += 2 * cc * d * n;  // output projection
    flops += cc * n;          // residual add
    return flops;
}

std::size_t BeamClassifier::flop_count() const {
    std::size_t flops = 0;
    int c = 1, h = cfg_.grid_rows, w = cfg_.grid_cols;
    for (std::size_t i = 0; i < cfg_.convs.size(); ++i) {
        const ConvSpec& cs = cfg_.convs[i];
        if (i + 1 == cfg_.convs.size()) {
            flops += attention_flop_count();
            const std::size_t pooled =
                static_cast<std::size_t>(c) * (h / cfg_.pool_h) * (w / cfg_.pool_w);
            flops += pooled * (cfg_.pool_h * cfg_.pool_w - 1);
            h /= cfg_.pool_h;
            w /= cfg_.pool_w;
        }
        const int ho = (h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        const int wo = (w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
        const std::size_t out_elems = static_cast<std::size_t>(cs.out_channels) * ho * wo;
        flops += out_elems * (2u * c * cs.kernel * cs.kernel + 1u);  // MACs + bias
        flops += out_elems;                                          // ReLU
        c = cs.out_channels;
        h = ho;
        w = wo;
    }
    std::size_t in_w = static_cast<std::size_t>(c) * h * w;
    flops += static_cast<std::size_t>(cfg_.fc1_out) * (2 * in_w + 1) + cfg_.fc1_out;
    in_w = cfg_.fc1_out + 2;
    for (int width : cfg_.hidden) {
        flops += static_cast<std::size_t>(width) * (2 * in_w + 1) + width;
        in_w = width;
    }
    flops += static_cast<std::size_t>(cfg_.outputs) * (2 * in_w + 1);
    flops += 4u * cfg_.outputs;  // softmax
    return flops;
}

std::vector<LayerRef> BeamClassifier::layers() const {
    std::vector<LayerRef> out;
    const int n_convs = static_cast<int>(cfg_.convs.size());
    int in_ch = 1;
    for (int i = 0; i < n_convs; ++i) {
        LayerRef ref;
        ref.weight = "conv" + std::to_string(i + 1) + ".weight";
        ref.bias = "conv" + std::to_string(i + 1) + ".bias";
        ref.kind = LayerRef::Kind::Conv;
        ref.out_units = cfg_.convs[i].out_channels;
        ref.weights_per_unit = in_ch * cfg_.convs[i].kernel * cfg_.convs[i].kernel;
        if (i + 1 < n_convs) {
            const bool crosses_attention = cfg_.attention.enabled && (i + 2 == n_convs);
            if (!crosses_attention) {
                ref.consumer = i + 1;
                ref.consumer_group_size = cfg_.convs[i + 1].kernel * cfg_.convs[i + 1].kernel;
                ref.consumer_group_offset = 0;
            }
        } else {
            // Last conv feeds fc1 channel-major: one flattened block per channel.
            auto shapes = stage_shapes();
            const auto& last = shapes.back();
            ref.consumer = n_convs;
            ref.consumer_group_size = last[1] * last[2];
            ref.consumer_group_offset = 0;
        }
        in_ch = cfg_.convs[i].out_channels;
        out.push_back(ref);
    }

    auto shapes = stage_shapes();
    const auto& last = shapes.back();
    int in_w = last[0] * last[1] * last[2];
    const int n_fc = static_cast<int>(cfg_.hidden.size()) + 2;
    for (int i = 0; i < n_fc; ++i) {
        LayerRef ref;
        ref.weight = "fc" + std::to_string(i + 1) + ".weight";
        ref.bias = "fc" + std::to_string(i + 1) + ".bias";
        ref.kind = LayerRef::Kind::Linear;
        const bool is_output = (i + 1 == n_fc);
        const int width = is_output ? cfg_.outputs
                          : (i == 0 ? cfg_.fc1_out : cfg_.hidden[i - 1]);
        ref.out_units = width;
        ref.weights_per_unit = in_w;
        // The beam-index output layer keeps all of its units.
        ref.structured_prunable = !is_output;
        if (!is_output) {
            ref.consumer = n_convs + i + 1;
            ref.consumer_group_size = 1;
            ref.consumer_group_offset = 0;  // features precede the coordinates
        }
        in_w = width + (i == 0 ? 2 : 0);
        out.push_back(ref);
    }
    return out;
}

void BeamClassifier::save_checkpoint(const std::string& path, int epoch,
                                     std::uint64_t seed) const {
    json j;
    j["format"] = kCheckpointFormat;
    j["manifest"] = {{"config", json::parse(cfg_.to_json())}, {"epoch", epoch}, {"seed", seed}};
    json tensors = json::object();
    for (int s = 0; s < params_.size(); ++s) {
        const auto& e = params_.entry(s);
        tensors[e.name] = {{"shape", e.value.shape}, {"data", e.value.data}};
    }
    j["tensors"] = std::move(tensors);
    write_file_atomic(path, j.dump() + "\n");
}

BeamClassifier BeamClassifier::load_checkpoint(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat)
        throw IoError("checkpoint " + path + " has an unknown format tag");
    ModelConfig cfg = ModelConfig::from_json(j.at("manifest").at("config").dump());
    BeamClassifier model = BeamClassifier::init(cfg);
    const auto& tensors = j.at("tensors");
    for (int s = 0; s < model.params_.size(); ++s) {
        auto& e = model.params_.entry(s);
        if (!tensors.contains(e.name))
            throw IoError("checkpoint " + path + " is missing tensor " + e.name);
        const auto& t = tensors.at(e.name);
        const auto shape = t.at("shape").get<std::vector<int>>();
        if (shape != e.value.shape) {
            throw IoError("checkpoint " + path + " tensor " + e.name + " has shape " +
                          shape_str(shape) + ", expected " + shape_str(e.value.shape));
        }
        e.value.data = t.at("data").get<std::vector<double>>();
        if (e.value.data.size() != shape_numel(shape))
            throw IoError("checkpoint " + path + " tensor " + e.name + " has a bad data length");
    }
    return model;
}

}  // namespace beamsel
