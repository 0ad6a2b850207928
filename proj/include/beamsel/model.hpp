#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beamsel/lidar_grid.hpp"
#include "beamsel/tensor.hpp"

namespace beamsel {

// Beam classifier: a 6-conv / 5-linear network over the occupancy grid with
// a positional side input, optionally augmented by one non-local attention
// block after the fifth convolution.

enum class AttentionVariant { EmbeddedGaussian, Gaussian, Dot };

std::string to_string(AttentionVariant v);
AttentionVariant attention_variant_from_string(const std::string& s);

struct AttentionConfig {
    bool enabled = true;
    AttentionVariant variant = AttentionVariant::EmbeddedGaussian;
    int inter_channels = 3;  // width of the phi/psi projections
    // Key/value subsampling inside the block (queries keep full resolution).
    int kv_pool_h = 2, kv_pool_w = 2;
    // Alternative placement: run the block after the standalone max pooling
    // instead of subsampling keys/values internally.
    bool pool_before = false;
};

struct ConvSpec {
    int out_channels = 5;
    int kernel = 3;
    int stride = 1;
    int padding = 1;
};

struct ModelConfig {
    int grid_rows = 200, grid_cols = 20;
    std::vector<ConvSpec> convs = {
        {5, 3, 1, 1}, {5, 3, 2, 1}, {5, 3, 1, 1}, {5, 3, 2, 1}, {5, 3, 1, 1}, {5, 3, 1, 1},
    };
    int pool_h = 2, pool_w = 2;  // standalone max pooling between conv5 and conv6
    int fc1_out = 64;
    std::vector<int> hidden = {64, 64, 64};
    int outputs = 256;
    AttentionConfig attention;
    std::uint64_t init_seed = 1;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Structured view of the trainable layers, used by parameter counting,
// checkpointing and pruning.
struct LayerRef {
    std::string weight;
    std::string bias;
    enum class Kind { Conv, Linear } kind = Kind::Linear;
    int out_units = 0;
    int weights_per_unit = 0;
    bool structured_prunable = true;
    // Wiring to the layer consuming this layer's units: masking producer
    // unit u additionally deadens the consumer's weight columns in group
    // (consumer_group_offset + u), each group consumer_group_size wide.
    // consumer < 0 when inputs cannot be traced (the attention residual
    // re-populates channels) or the layer feeds the loss directly.
    int consumer = -1;
    int consumer_group_size = 0;
    int consumer_group_offset = 0;
};

class BeamClassifier {
public:
    static BeamClassifier init(const ModelConfig& config);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Builds the taped forward pass and returns the softmax output node.
    // veh coordinates are min-max normalized to [0,1] by the caller.
    Tape::NodeId forward(Tape& tape, const Grid& grid, double vx_norm, double vy_norm) const;

    // Convenience inference on a throwaway tape.
    Tensor predict(const Grid& grid, double vx_norm, double vy_norm) const;

    std::size_t param_count() const { return params_.param_count(); }
    // Exact forward cost by shape enumeration, multiply-accumulate = 2 FLOPs.
    std::size_t flop_count() const;
    std::size_t attention_flop_count() const;

    // [C,H,W] after each convolution stage, attention and pooling included
    // in sequence order.
    std::vector<std::vector<int>> stage_shapes() const;
    // Shape after the fifth convolution (the attention block's input).
    std::vector<int> conv5_shape() const;

    std::vector<LayerRef> layers() const;

    void save_checkpoint(const std::string& path, int epoch, std::uint64_t seed) const;
    static BeamClassifier load_checkpoint(const std::string& path);

private:
    BeamClassifier() = default;

    ModelConfig cfg_;
    ParamStore params_;
};

// The non-local attention block as a taped subgraph: O_i = I_i +
// proj(sum_j phi(I_i, I_j) psi(I_j) / eta). Parameter names are
// prefix + {".phi1", ".phi2", ".psi", ".out"}; phi1/phi2 exist only for the
// embedded Gaussian variant.
Tape::NodeId nonlocal_forward(Tape& tape, Tape::NodeId input, const AttentionConfig& cfg,
                              const ParamStore& params, const std::string& prefix = "attn");

// Creates the attention parameters for a given input channel count.
void create_attention_params(ParamStore& store, const AttentionConfig& cfg, int channels,
                             std::uint64_t seed, const std::string& prefix = "attn");

}  // namespace beamsel
