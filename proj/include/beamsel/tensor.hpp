#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "beamsel/errors.hpp"

namespace beamsel {

// Dense row-major tensor of 64-bit floats. The whole engine runs in double
// precision; the model is small and this keeps finite-difference gradient
// checks tight.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor vec(std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    // Rank-3 [C,H,W] accessors used by the conv/pool/attention paths.
    double& at3(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    double at3(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    // Rank-2 [R,C] accessors.
    double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool same_shape(const std::vector<int>& a, const std::vector<int>& b);

// Named parameter tensors with stable (insertion) iteration order, gradient
// buffers and the adaptive-moment optimizer slots.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        std::vector<double> grad;  // same length as value.data
        std::vector<double> m;     // first-moment slot
        std::vector<double> v;     // second-moment slot
    };

    Tensor& create(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    std::vector<double>& grad(const std::string& name);
    Entry& entry(int i) { return entries_[i]; }
    const Entry& entry(int i) const { return entries_[i]; }
    int slot_of(const std::string& name) const;
    int size() const { return static_cast<int>(entries_.size()); }
    std::size_t param_count() const;
    void zero_grad();

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Reverse-mode tape. Operations append nodes in execution order; backward()
// walks them once in reverse. A tape serves exactly one forward/backward
// round; running backward twice without new forward work is an error.
class Tape {
public:
    using NodeId = int;

    NodeId input(Tensor t);
    // Leases a parameter onto the tape; its gradient is later flushed back
    // into the store by accumulate_param_grads().
    NodeId param(const ParamStore& store, const std::string& name);

    // Cross-correlation convolution, [C_in,H,W] x [C_out,C_in,kH,kW] -> [C_out,H',W'].
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int padding);
    // [m,n] weight, [n] input, [m] bias -> [m].
    NodeId linear(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    // Rank-1 softmax with max subtraction. Output sums to 1 within 1e-12.
    NodeId softmax(NodeId x);
    // Max pooling over [C,H,W] with window kh x kw and equal stride. Output
    // extents are floor(H/kh) x floor(W/kw); a trailing remainder that does
    // not fill a window is dropped. Window ties keep the first (lowest flat
    // index) element.
    NodeId maxpool2d(NodeId x, int kh, int kw);
    NodeId matmul(NodeId a, NodeId b);    // [m,k] x [k,n] -> [m,n]
    NodeId transpose(NodeId a);           // [m,n] -> [n,m]
    NodeId reshape(NodeId x, std::vector<int> shape);
    NodeId concat(NodeId a, NodeId b);    // rank-1 concat
    NodeId add(NodeId a, NodeId b);       // same-shape elementwise
    NodeId scale(NodeId x, double c);
    // Softmax along each row of a [m,n] matrix, with max subtraction.
    NodeId row_softmax(NodeId x);
    // -sum_i target_i * log(max(q_i, eps)). Entries floored at eps contribute
    // a constant and zero gradient; target entries must be nonnegative.
    NodeId cross_entropy(const Tensor& target, NodeId q, double eps = 1e-12);
    NodeId sum(NodeId x);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const std::vector<double>& grad(NodeId id) const { return nodes_[id].grad; }

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be scalar.
    void backward(NodeId loss);
    // Adds scale * (tape gradient) of every leased parameter into the store.
    void accumulate_param_grads(ParamStore& store, double scale) const;

    void reset();
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::function<void(Tape&)> backward;  // empty for leaves
        int param_slot = -1;
        std::string param_name;
        // Saved argmax indices for pooling nodes.
        std::vector<int> aux_idx;
    };

    NodeId push(Tensor value);
    void check_rank(NodeId id, int rank, const char* op) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    friend struct TapeTestAccess;
};

// Finite-difference gradient verification. Builds the graph with `fn`, runs
// one analytic backward, then compares against central differences with step
// 1e-6 * max(1, |x|) per coordinate. When samples_per_tensor > 0 only that
// many deterministically chosen coordinates of each tensor are probed.
struct GradCheckReport {
    struct Item {
        std::string name;
        double max_rel_err = 0.0;
        std::size_t worst_index = 0;
        bool finite = true;
    };
    std::vector<Item> items;
    double tolerance = 0.0;
    bool pass = false;
    std::string to_string() const;
};

GradCheckReport grad_check(const std::function<Tape::NodeId(Tape&, ParamStore&)>& fn,
                           ParamStore& params, double tolerance,
                           int samples_per_tensor = -1);

}  // namespace beamsel
