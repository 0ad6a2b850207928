#include "beamsel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace beamsel {

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vec(std::vector<double> values) {
    int n = static_cast<int>(values.size());
    return Tensor({n}, std::move(values));
}

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(entries_.size());
    Entry e;
    e.name = name;
    std::size_t n = init.numel();
    e.value = std::move(init);
    e.grad.assign(n, 0.0);
    e.m.assign(n, 0.0);
    e.v.assign(n, 0.0);
    entries_.push_back(std::move(e));
    return entries_.back().value;
}

Tensor& ParamStore::value(const std::string& name) { return entries_[slot_of(name)].value; }

const Tensor& ParamStore::value(const std::string& name) const {
    return entries_[slot_of(name)].value;
}

std::vector<double>& ParamStore::grad(const std::string& name) { return entries_[slot_of(name)].grad; }

int ParamStore::slot_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter name: " + name);
    return it->second;
}

std::size_t ParamStore::param_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& e : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

Tape::NodeId Tape::push(Tensor value) {
    // New forward work re-arms the tape after a completed backward pass.
    backward_done_ = false;
    nodes_.push_back(Node{std::move(value), {}, {}, -1, {}, {}});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check_rank(NodeId id, int rank, const char* op) const {
    if (nodes_[id].value.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(nodes_[id].value.shape));
    }
}

Tape::NodeId Tape::input(Tensor t) { return push(std::move(t)); }

Tape::NodeId Tape::param(const ParamStore& store, const std::string& name) {
    int slot = store.slot_of(name);
    NodeId id = push(store.entry(slot).value);
    nodes_[id].param_slot = slot;
    nodes_[id].param_name = name;
    return id;
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, int stride, int padding) {
    check_rank(x, 3, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    check_rank(b, 1, "conv2d bias");
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    const Tensor& bv = nodes_[b].value;
    const int cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
    const int cout = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
    if (wv.shape[1] != cin) {
        throw ShapeError("conv2d: weight expects " + std::to_string(wv.shape[1]) +
                         " input channels, input has " + std::to_string(cin) + " (input " +
                         shape_str(xv.shape) + ", weight " + shape_str(wv.shape) + ")");
    }
    if (bv.shape[0] != cout) {
        throw ShapeError("conv2d: bias length " + std::to_string(bv.shape[0]) +
                         " does not match " + std::to_string(cout) + " output channels");
    }
    if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
    if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
    const int ho = (h + 2 * padding - kh) / stride + 1;
    const int wo = (wd + 2 * padding - kw) / stride + 1;
    if (ho <= 0 || wo <= 0) {
        throw ConfigError("conv2d: input " + shape_str(xv.shape) + " too small for kernel " +
                          std::to_string(kh) + "x" + std::to_string(kw));
    }

    Tensor out = Tensor::zeros({cout, ho, wo});
    for (int co = 0; co < cout; ++co) {
        for (int oi = 0; oi < ho; ++oi) {
            for (int oj = 0; oj < wo; ++oj) {
                double acc = bv.data[co];
                const int i0 = oi * stride - padding;
                const int j0 = oj * stride - padding;
                for (int ci = 0; ci < cin; ++ci) {
                    for (int u = 0; u < kh; ++u) {
                        const int ii = i0 + u;
                        if (ii < 0 || ii >= h) continue;
                        const double* xrow = &xv.data[(static_cast<std::size_t>(ci) * h + ii) * wd];
                        const double* wrow =
                            &wv.data[((static_cast<std::size_t>(co) * cin + ci) * kh + u) * kw];
                        for (int v = 0; v < kw; ++v) {
                            const int jj = j0 + v;
                            if (jj < 0 || jj >= wd) continue;
                            acc += xrow[jj] * wrow[v];
                        }
                    }
                }
                out.at3(co, oi, oj) = acc;
            }
        }
    }

    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, w, b, stride, padding, id](Tape& t) {
        const Tensor& xv = t.nodes_[x].value;
        const Tensor& wv = t.nodes_[w].value;
        const std::vector<double>& go = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        std::vector<double>& gw = t.nodes_[w].grad;
        std::vector<double>& gb = t.nodes_[b].grad;
        const int cin = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
        const int cout = wv.shape[0], kh = wv.shape[2], kw = wv.shape[3];
        const Tensor& ov = t.nodes_[id].value;
        const int ho = ov.shape[1], wo = ov.shape[2];
        for (int co = 0; co < cout; ++co) {
            for (int oi = 0; oi < ho; ++oi) {
                for (int oj = 0; oj < wo; ++oj) {
                    const double g = go[(static_cast<std::size_t>(co) * ho + oi) * wo + oj];
                    if (g == 0.0) continue;
                    gb[co] += g;
                    const int i0 = oi * stride - padding;
                    const int j0 = oj * stride - padding;
                    for (int ci = 0; ci < cin; ++ci) {
                        for (int u = 0; u < kh; ++u) {
                            const int ii = i0 + u;
                            if (ii < 0 || ii >= h) continue;
                            const std::size_t xbase = (static_cast<std::size_t>(ci) * h + ii) * wd;
                            const std::size_t wbase =
                                ((static_cast<std::size_t>(co) * cin + ci) * kh + u) * kw;
                            for (int v = 0; v < kw; ++v) {
                                const int jj = j0 + v;
                                if (jj < 0 || jj >= wd) continue;
                                gx[xbase + jj] += g * wv.data[wbase + v];
                                gw[wbase + v] += g * xv.data[xbase + jj];
                            }
                        }
                    }
                }
            }
        }
    };
    return id;
}

Tape::NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
    check_rank(x, 1, "linear input");
    check_rank(w, 2, "linear weight");
    check_rank(b, 1, "linear bias");
    const Tensor& xv = nodes_[x].value;
    const Tensor& wv = nodes_[w].value;
    const Tensor& bv = nodes_[b].value;
    const int m = wv.shape[0], n = wv.shape[1];
    if (xv.shape[0] != n) {
        throw ShapeError("linear: weight " + shape_str(wv.shape) + " does not accept input " +
                         shape_str(xv.shape));
    }
    if (bv.shape[0] != m) {
        throw ShapeError("linear: bias length " + std::to_string(bv.shape[0]) +
                         " does not match " + std::to_string(m) + " outputs");
    }
    Tensor out = Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        double acc = bv.data[i];
        const double* wrow = &wv.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) acc += wrow[j] * xv.data[j];
        out.data[i] = acc;
    }
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, w, b, id](Tape& t) {
        const Tensor& xv = t.nodes_[x].value;
        const Tensor& wv = t.nodes_[w].value;
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        std::vector<double>& gw = t.nodes_[w].grad;
        std::vector<double>& gb = t.nodes_[b].grad;
        const int m = wv.shape[0], n = wv.shape[1];
        for (int i = 0; i < m; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            gb[i] += gi;
            const double* wrow = &wv.data[static_cast<std::size_t>(i) * n];
            double* gwrow = &gw[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) {
                gx[j] += gi * wrow[j];
                gwrow[j] += gi * xv.data[j];
            }
        }
    };
    return id;
}

Tape::NodeId Tape::relu(NodeId x) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, id](Tape& t) {
        const std::vector<double>& xd = t.nodes_[x].value.data;
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        // Subgradient at exactly 0 is defined as 0.
        for (std::size_t i = 0; i < xd.size(); ++i) {
            if (xd[i] > 0.0) gx[i] += g[i];
        }
    };
    return id;
}

Tape::NodeId Tape::softmax(NodeId x) {
    check_rank(x, 1, "softmax");
    const Tensor& xv = nodes_[x].value;
    Tensor out = Tensor::zeros(xv.shape);
    double mx = xv.data[0];
    for (double v : xv.data) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
        out.data[i] = std::exp(xv.data[i] - mx);
        z += out.data[i];
    }
    for (double& v : out.data) v /= z;
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, id](Tape& t) {
        const std::vector<double>& y = t.nodes_[id].value.data;
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (g[i] - dot);
    };
    return id;
}

Tape::NodeId Tape::maxpool2d(NodeId x, int kh, int kw) {
    check_rank(x, 3, "maxpool2d");
    if (kh < 1 || kw < 1) throw ConfigError("maxpool2d: window extents must be >= 1");
    const Tensor& xv = nodes_[x].value;
    const int c = xv.shape[0], h = xv.shape[1], w = xv.shape[2];
    const int ho = h / kh, wo = w / kw;
    if (ho < 1 || wo < 1) {
        throw ConfigError("maxpool2d: input " + shape_str(xv.shape) + " smaller than window " +
                          std::to_string(kh) + "x" + std::to_string(kw));
    }
    Tensor out = Tensor::zeros({c, ho, wo});
    std::vector<int> argmax(out.numel());
    for (int ci = 0; ci < c; ++ci) {
        for (int oi = 0; oi < ho; ++oi) {
            for (int oj = 0; oj < wo; ++oj) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int u = 0; u < kh; ++u) {
                    for (int v = 0; v < kw; ++v) {
                        const int ii = oi * kh + u, jj = oj * kw + v;
                        const int idx = (ci * h + ii) * w + jj;
                        if (xv.data[idx] > best) {
                            best = xv.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.at3(ci, oi, oj) = best;
                argmax[(static_cast<std::size_t>(ci) * ho + oi) * wo + oj] = best_idx;
            }
        }
    }
    NodeId id = push(std::move(out));
    nodes_[id].aux_idx = std::move(argmax);
    nodes_[id].backward = [x, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        const std::vector<int>& arg = t.nodes_[id].aux_idx;
        std::vector<double>& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[arg[i]] += g[i];
    };
    return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
    check_rank(a, 2, "matmul lhs");
    check_rank(b, 2, "matmul rhs");
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    if (bv.shape[0] != k) {
        throw ShapeError("matmul: " + shape_str(av.shape) + " x " + shape_str(bv.shape));
    }
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av_ip = av.data[static_cast<std::size_t>(i) * k + p];
            if (av_ip == 0.0) continue;
            const double* brow = &bv.data[static_cast<std::size_t>(p) * n];
            double* orow = &out.data[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av_ip * brow[j];
        }
    }
    NodeId id = push(std::move(out));
    nodes_[id].backward = [a, b, id](Tape& t) {
        const Tensor& av = t.nodes_[a].value;
        const Tensor& bv = t.nodes_[b].value;
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& ga = t.nodes_[a].grad;
        std::vector<double>& gb = t.nodes_[b].grad;
        const int m = av.shape[0], k = av.shape[1], n = bv.shape[1];
        // dA = g * B^T, dB = A^T * g
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                const double* grow = &g[static_cast<std::size_t>(i) * n];
                const double* brow = &bv.data[static_cast<std::size_t>(p) * n];
                for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                ga[static_cast<std::size_t>(i) * k + p] += acc;
            }
        }
        for (int p = 0; p < k; ++p) {
            for (int i = 0; i < m; ++i) {
                const double av_ip = av.data[static_cast<std::size_t>(i) * k + p];
                if (av_ip == 0.0) continue;
                const double* grow = &g[static_cast<std::size_t>(i) * n];
                double* gbrow = &gb[static_cast<std::size_t>(p) * n];
                for (int j = 0; j < n; ++j) gbrow[j] += av_ip * grow[j];
            }
        }
    };
    return id;
}

Tape::NodeId Tape::transpose(NodeId a) {
    check_rank(a, 2, "transpose");
    const Tensor& av = nodes_[a].value;
    const int m = av.shape[0], n = av.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at2(j, i) = av.at2(i, j);
    NodeId id = push(std::move(out));
    nodes_[id].backward = [a, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& ga = t.nodes_[a].grad;
        const int n = t.nodes_[id].value.shape[0], m = t.nodes_[id].value.shape[1];
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                ga[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
    };
    return id;
}

Tape::NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
    if (shape_numel(shape) != nodes_[x].value.numel()) {
        throw ShapeError("reshape: " + shape_str(nodes_[x].value.shape) + " -> " + shape_str(shape) +
                         " changes element count");
    }
    Tensor out(std::move(shape), nodes_[x].value.data);
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
    return id;
}

Tape::NodeId Tape::concat(NodeId a, NodeId b) {
    check_rank(a, 1, "concat");
    check_rank(b, 1, "concat");
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    Tensor out = Tensor::zeros({av.shape[0] + bv.shape[0]});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.shape[0]);
    NodeId id = push(std::move(out));
    const int na = av.shape[0];
    nodes_[id].backward = [a, b, na, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& ga = t.nodes_[a].grad;
        std::vector<double>& gb = t.nodes_[b].grad;
        for (int i = 0; i < na; ++i) ga[i] += g[i];
        for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
    };
    return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    if (!same_shape(av.shape, bv.shape)) {
        throw ShapeError("add: shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    NodeId id = push(std::move(out));
    nodes_[id].backward = [a, b, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& ga = t.nodes_[a].grad;
        std::vector<double>& gb = t.nodes_[b].grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return id;
}

Tape::NodeId Tape::scale(NodeId x, double c) {
    Tensor out = nodes_[x].value;
    for (double& v : out.data) v *= c;
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, c, id](Tape& t) {
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    };
    return id;
}

Tape::NodeId Tape::row_softmax(NodeId x) {
    check_rank(x, 2, "row_softmax");
    const Tensor& xv = nodes_[x].value;
    const int m = xv.shape[0], n = xv.shape[1];
    Tensor out = Tensor::zeros(xv.shape);
    for (int i = 0; i < m; ++i) {
        const double* row = &xv.data[static_cast<std::size_t>(i) * n];
        double* orow = &out.data[static_cast<std::size_t>(i) * n];
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= z;
    }
    NodeId id = push(std::move(out));
    nodes_[id].backward = [x, id](Tape& t) {
        const Tensor& y = t.nodes_[id].value;
        const std::vector<double>& g = t.nodes_[id].grad;
        std::vector<double>& gx = t.nodes_[x].grad;
        const int m = y.shape[0], n = y.shape[1];
        for (int i = 0; i < m; ++i) {
            const double* yrow = &y.data[static_cast<std::size_t>(i) * n];
            const double* grow = &g[static_cast<std::size_t>(i) * n];
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            double* gxrow = &gx[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
        }
    };
    return id;
}

Tape::NodeId Tape::cross_entropy(const Tensor& target, NodeId q, double eps) {
    check_rank(q, 1, "cross_entropy prediction");
    const Tensor& qv = nodes_[q].value;
    if (!same_shape(target.shape, qv.shape)) {
        throw ShapeError("cross_entropy: target " + shape_str(target.shape) + " vs prediction " +
                         shape_str(qv.shape));
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < target.data.size(); ++i) {
        const double p = target.data[i];
        if (p < 0.0) throw ConfigError("cross_entropy: negative target entry");
        if (p == 0.0) continue;  // 0 * log(0) convention
        loss -= p * std::log(std::max(qv.data[i], eps));
    }
    NodeId id = push(Tensor({1}, {loss}));
    Tensor tcopy = target;
    nodes_[id].backward = [q, tcopy = std::move(tcopy), eps, id](Tape& t) {
        const double g = t.nodes_[id].grad[0];
        const std::vector<double>& qd = t.nodes_[q].value.data;
        std::vector<double>& gq = t.nodes_[q].grad;
        for (std::size_t i = 0; i < qd.size(); ++i) {
            const double p = tcopy.data[i];
            if (p == 0.0 || qd[i] <= eps) continue;  // floored entries have zero slope
            gq[i] -= g * p / qd[i];
        }
    };
    return id;
}

Tape::NodeId Tape::sum(NodeId x) {
    double s = 0.0;
    for (double v : nodes_[x].value.data) s += v;
    NodeId id = push(Tensor({1}, {s}));
    nodes_[id].backward = [x, id](Tape& t) {
        const double g = t.nodes_[id].grad[0];
        std::vector<double>& gx = t.nodes_[x].grad;
        for (double& v : gx) v += g;
    };
    return id;
}

void Tape::backward(NodeId loss) {
    if (backward_done_) {
        throw NumericalError("backward called twice on a stale tape; run a fresh forward first");
    }
    if (nodes_[loss].value.numel() != 1) {
        throw ShapeError("backward: loss node must be scalar, got " +
                         shape_str(nodes_[loss].value.shape));
    }
    for (auto& node : nodes_) node.grad.assign(node.value.numel(), 0.0);
    nodes_[loss].grad[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
        if (nodes_[i].backward) nodes_[i].backward(*this);
    }
    backward_done_ = true;
}

void Tape::accumulate_param_grads(ParamStore& store, double scale) const {
    for (const auto& node : nodes_) {
        if (node.param_slot < 0 || node.grad.empty()) continue;
        std::vector<double>& g = store.entry(node.param_slot).grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * node.grad[i];
    }
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    for (const auto& it : items) {
        os << (it.finite && it.max_rel_err <= tolerance ? "ok   " : "FAIL ") << it.name
           << " max_rel_err=" << it.max_rel_err << " worst_index=" << it.worst_index
           << (it.finite ? "" : " (non-finite)") << "\n";
    }
    os << (pass ? "PASS" : "FAIL") << " tolerance=" << tolerance << "\n";
    return os.str();
}

GradCheckReport grad_check(const std::function<Tape::NodeId(Tape&, ParamStore&)>& fn,
                           ParamStore& params, double tolerance, int samples_per_tensor) {
    GradCheckReport report;
    report.tolerance = tolerance;

    auto eval = [&]() {
        Tape tape;
        Tape::NodeId loss = fn(tape, params);
        if (tape.value(loss).numel() != 1) throw ShapeError("grad_check: function must be scalar");
        return tape.value(loss).data[0];
    };

    // One analytic pass.
    params.zero_grad();
    {
        Tape tape;
        Tape::NodeId loss = fn(tape, params);
        tape.backward(loss);
        tape.accumulate_param_grads(params, 1.0);
    }
    std::vector<std::vector<double>> analytic(params.size());
    for (int s = 0; s < params.size(); ++s) analytic[s] = params.entry(s).grad;

    bool all_ok = true;
    for (int s = 0; s < params.size(); ++s) {
        auto& entry = params.entry(s);
        GradCheckReport::Item item;
        item.name = entry.name;
        const std::size_t n = entry.value.numel();
        std::vector<std::size_t> coords;
        if (samples_per_tensor <= 0 || static_cast<std::size_t>(samples_per_tensor) >= n) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            // Deterministic stratified coordinate choice.
            for (int k = 0; k < samples_per_tensor; ++k) {
                coords.push_back((static_cast<std::size_t>(k) * n) / samples_per_tensor);
            }
        }
        for (std::size_t idx : coords) {
            double& x = entry.value.data[idx];
            const double orig = x;
            const double h = 1e-6 * std::max(1.0, std::abs(orig));
            x = orig + h;
            const double fp = eval();
            x = orig - h;
            const double fm = eval();
            x = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[s][idx];
            if (!std::isfinite(fd) || !std::isfinite(an)) {
                item.finite = false;
                item.worst_index = idx;
                all_ok = false;
                break;
            }
            const double rel = std::abs(an - fd) / std::max({1e-6, std::abs(an), std::abs(fd)});
            if (rel > item.max_rel_err) {
                item.max_rel_err = rel;
                item.worst_index = idx;
            }
        }
        if (item.max_rel_err > tolerance) all_ok = false;
        report.items.push_back(std::move(item));
    }
    report.pass = all_ok;
    return report;
}

}  // namespace beamsel
