#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace windsched {

inline constexpr double kMaskNegInf = -1e9;       // stand-in for -inf in logits
inline constexpr double kMaskThreshold = -1e8;    // entries below this count as masked

namespace ag {

/// Thread-local gradient mode. Ops record the backward graph only while on.
inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // takes self; must not capture itself
    bool requires_grad = false;
    bool seeded = false;

    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    size_t numel() const { return value.size(); }
    double* grad_ptr() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad.data();
    }
};

// --- flat matmul kernels; M x N result with shared dimension K ---

inline void mm(const double* A, const double* B, double* C, int M, int K, int N, bool acc) {
    // C (+)= A(MxK) * B(KxN)
    for (int i = 0; i < M; ++i) {
        double* ci = C + static_cast<size_t>(i) * N;
        if (!acc)
            for (int j = 0; j < N; ++j) ci[j] = 0.0;
        const double* ai = A + static_cast<size_t>(i) * K;
        for (int p = 0; p < K; ++p) {
            const double a = ai[p];
            const double* bp = B + static_cast<size_t>(p) * N;
            for (int j = 0; j < N; ++j) ci[j] += a * bp[j];
        }
    }
}

inline void mm_nt(const double* A, const double* B, double* C, int M, int K, int N, bool acc) {
    // C (+)= A(MxK) * B(NxK)^T
    for (int i = 0; i < M; ++i) {
        const double* ai = A + static_cast<size_t>(i) * K;
        double* ci = C + static_cast<size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const double* bj = B + static_cast<size_t>(j) * K;
            double s = 0.0;
            for (int p = 0; p < K; ++p) s += ai[p] * bj[p];
            ci[j] = acc ? ci[j] + s : s;
        }
    }
}

inline void mm_tn(const double* A, const double* B, double* C, int M, int K, int N, bool acc) {
    // C (+)= A(KxM)^T * B(KxN)
    if (!acc)
        for (size_t i = 0; i < static_cast<size_t>(M) * N; ++i) C[i] = 0.0;
    for (int p = 0; p < K; ++p) {
        const double* ap = A + static_cast<size_t>(p) * M;
        const double* bp = B + static_cast<size_t>(p) * N;
        for (int i = 0; i < M; ++i) {
            const double a = ap[i];
            if (a == 0.0) continue;
            double* ci = C + static_cast<size_t>(i) * N;
            for (int j = 0; j < N; ++j) ci[j] += a * bp[j];
        }
    }
}

}  // namespace ag

/// Handle onto a node of the dynamic computation graph. Cheap to copy; the
/// graph lives as long as some handle (or child node) references it.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<ag::Node> n) : n_(std::move(n)) {}

    static Tensor zeros(int rows, int cols) {
        auto n = std::make_shared<ag::Node>();
        n->shape = {rows, cols};
        n->value.assign(static_cast<size_t>(rows) * cols, 0.0);
        return Tensor(std::move(n));
    }
    static Tensor from(int rows, int cols, std::vector<double> values) {
        if (static_cast<size_t>(rows) * cols != values.size())
            throw std::invalid_argument("Tensor::from: shape does not match value count");
        auto n = std::make_shared<ag::Node>();
        n->shape = {rows, cols};
        n->value = std::move(values);
        return Tensor(std::move(n));
    }
    static Tensor scalar(double v) { return from(1, 1, {v}); }

    bool defined() const { return n_ != nullptr; }
    int rows() const { return n_->rows(); }
    int cols() const { return n_->cols(); }
    size_t numel() const { return n_->numel(); }
    const std::vector<int>& shape() const { return n_->shape; }

    const double* data() const { return n_->value.data(); }
    double* data() { return n_->value.data(); }
    double at(int r, int c) const { return n_->value[static_cast<size_t>(r) * cols() + c]; }
    double value() const {
        if (numel() != 1) throw std::logic_error("Tensor::value: not a scalar");
        return n_->value[0];
    }
    const std::vector<double>& values() const { return n_->value; }

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        n_->requires_grad = b;
        return *this;
    }
    const std::vector<double>& grad() const { return n_->grad; }
    std::shared_ptr<ag::Node> node() const { return n_; }

  private:
    std::shared_ptr<ag::Node> n_;
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(ag::grad_mode()) { ag::grad_mode() = false; }
    ~NoGradGuard() { ag::grad_mode() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
};

namespace ag {

inline Tensor make_op(std::vector<int> shape, std::vector<std::shared_ptr<Node>> parents,
                      std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(n->rows()) * n->cols(), 0.0);
    if (grad_mode()) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward);
        }
    }
    return Tensor(std::move(n));
}

inline void check_2d_match(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace ag

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    const int M = a.rows(), K = a.cols(), N = b.cols();
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op({M, N}, {an, bn}, [an, bn, M, K, N](ag::Node& self) {
        if (an->requires_grad) ag::mm_nt(self.grad.data(), bn->value.data(), an->grad_ptr(), M, N, K, true);
        if (bn->requires_grad) ag::mm_tn(an->value.data(), self.grad.data(), bn->grad_ptr(), K, M, N, true);
    });
    ag::mm(a.data(), b.data(), out.data(), M, K, N, false);
    return out;
}

/// a * b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
    const int M = a.rows(), K = a.cols(), N = b.rows();
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op({M, N}, {an, bn}, [an, bn, M, K, N](ag::Node& self) {
        if (an->requires_grad) ag::mm(self.grad.data(), bn->value.data(), an->grad_ptr(), M, N, K, true);
        if (bn->requires_grad) ag::mm_tn(self.grad.data(), an->value.data(), bn->grad_ptr(), N, M, K, true);
    });
    ag::mm_nt(a.data(), b.data(), out.data(), M, K, N, false);
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    ag::check_2d_match(a, b, "add");
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op(a.shape(), {an, bn}, [an, bn](ag::Node& self) {
        if (an->requires_grad) {
            double* g = an->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            double* g = bn->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    ag::check_2d_match(a, b, "sub");
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op(a.shape(), {an, bn}, [an, bn](ag::Node& self) {
        if (an->requires_grad) {
            double* g = an->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            double* g = bn->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    ag::check_2d_match(a, b, "mul");
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op(a.shape(), {an, bn}, [an, bn](ag::Node& self) {
        if (an->requires_grad) {
            double* g = an->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            double* g = bn->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * an->value[i];
        }
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an, c](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += c * self.grad[i];
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = c * a.data()[i];
    return out;
}

/// Adds a 1 x N bias row to every row of an M x N tensor.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
    if (b.rows() != 1 || b.cols() != a.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols");
    const int M = a.rows(), N = a.cols();
    auto an = a.node(), bn = b.node();
    Tensor out = ag::make_op(a.shape(), {an, bn}, [an, bn, M, N](ag::Node& self) {
        if (an->requires_grad) {
            double* g = an->grad_ptr();
            for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            double* g = bn->grad_ptr();
            for (int r = 0; r < M; ++r)
                for (int c = 0; c < N; ++c) g[c] += self.grad[static_cast<size_t>(r) * N + c];
        }
    });
    for (int r = 0; r < M; ++r)
        for (int c = 0; c < N; ++c)
            out.data()[static_cast<size_t>(r) * N + c] = a.at(r, c) + b.data()[c];
    return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const int N = parts[0].cols();
    int M = 0;
    std::vector<std::shared_ptr<ag::Node>> parents;
    for (const auto& p : parts) {
        if (p.cols() != N) throw std::invalid_argument("concat_rows: column mismatch");
        M += p.rows();
        parents.push_back(p.node());
    }
    auto ps = parents;
    Tensor out = ag::make_op({M, N}, std::move(parents), [ps, N](ag::Node& self) {
        size_t off = 0;
        for (const auto& p : ps) {
            if (p->requires_grad) {
                double* g = p->grad_ptr();
                for (size_t i = 0; i < p->value.size(); ++i) g[i] += self.grad[off + i];
            }
            off += p->value.size();
        }
    });
    size_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(out.data() + off, p.data(), p.numel() * sizeof(double));
        off += p.numel();
    }
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const int M = parts[0].rows();
    int N = 0;
    std::vector<std::shared_ptr<ag::Node>> parents;
    for (const auto& p : parts) {
        if (p.rows() != M) throw std::invalid_argument("concat_cols: row mismatch");
        N += p.cols();
        parents.push_back(p.node());
    }
    auto ps = parents;
    Tensor out = ag::make_op({M, N}, std::move(parents), [ps, M, N](ag::Node& self) {
        int coff = 0;
        for (const auto& p : ps) {
            const int pc = p->cols();
            if (p->requires_grad) {
                double* g = p->grad_ptr();
                for (int r = 0; r < M; ++r)
                    for (int c = 0; c < pc; ++c)
                        g[static_cast<size_t>(r) * pc + c] +=
                            self.grad[static_cast<size_t>(r) * N + coff + c];
            }
            coff += pc;
        }
    });
    int coff = 0;
    for (const auto& p : parts) {
        const int pc = p.cols();
        for (int r = 0; r < M; ++r)
            std::memcpy(out.data() + static_cast<size_t>(r) * N + coff,
                        p.data() + static_cast<size_t>(r) * pc, pc * sizeof(double));
        coff += pc;
    }
    return out;
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
    const int N = a.cols();
    auto an = a.node();
    Tensor out = ag::make_op({r1 - r0, N}, {an}, [an, r0, N](ag::Node& self) {
        double* g = an->grad_ptr() + static_cast<size_t>(r0) * N;
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
    std::memcpy(out.data(), a.data() + static_cast<size_t>(r0) * N,
                static_cast<size_t>(r1 - r0) * N * sizeof(double));
    return out;
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    const int M = a.rows(), N = a.cols(), W = c1 - c0;
    auto an = a.node();
    Tensor out = ag::make_op({M, W}, {an}, [an, c0, M, N, W](ag::Node& self) {
        double* g = an->grad_ptr();
        for (int r = 0; r < M; ++r)
            for (int c = 0; c < W; ++c)
                g[static_cast<size_t>(r) * N + c0 + c] += self.grad[static_cast<size_t>(r) * W + c];
    });
    for (int r = 0; r < M; ++r)
        std::memcpy(out.data() + static_cast<size_t>(r) * W,
                    a.data() + static_cast<size_t>(r) * N + c0, W * sizeof(double));
    return out;
}

/// Gathers rows by index: out[r] = a[indices[r]]. Duplicate indices are
/// allowed; their gradients accumulate.
inline Tensor gather_rows(const Tensor& a, std::vector<int> indices) {
    const int N = a.cols();
    for (int i : indices)
        if (i < 0 || i >= a.rows()) throw std::invalid_argument("gather_rows: index out of range");
    auto an = a.node();
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    Tensor out = ag::make_op({static_cast<int>(idx->size()), N}, {an}, [an, idx, N](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t r = 0; r < idx->size(); ++r) {
            const size_t src = r * N, dst = static_cast<size_t>((*idx)[r]) * N;
            for (int c = 0; c < N; ++c) g[dst + c] += self.grad[src + c];
        }
    });
    for (size_t r = 0; r < idx->size(); ++r)
        std::memcpy(out.data() + r * N, a.data() + static_cast<size_t>((*idx)[r]) * N,
                    N * sizeof(double));
    return out;
}

inline Tensor softmax_rows(const Tensor& a) {
    const int M = a.rows(), N = a.cols();
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an, M, N](ag::Node& self) {
        double* g = an->grad_ptr();
        for (int r = 0; r < M; ++r) {
            const double* y = self.value.data() + static_cast<size_t>(r) * N;
            const double* dy = self.grad.data() + static_cast<size_t>(r) * N;
            double dot = 0.0;
            for (int c = 0; c < N; ++c) dot += dy[c] * y[c];
            double* gr = g + static_cast<size_t>(r) * N;
            for (int c = 0; c < N; ++c) gr[c] += y[c] * (dy[c] - dot);
        }
    });
    for (int r = 0; r < M; ++r) {
        const double* x = a.data() + static_cast<size_t>(r) * N;
        double* y = out.data() + static_cast<size_t>(r) * N;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < N; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (int c = 0; c < N; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (int c = 0; c < N; ++c) y[c] /= sum;
    }
    return out;
}

inline Tensor sigmoid(const Tensor& a) {
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    return out;
}

inline Tensor tanh_act(const Tensor& a) {
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < self.grad.size(); ++i)
            g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::tanh(a.data()[i]);
    return out;
}

inline Tensor log_elem(const Tensor& a) {
    for (size_t i = 0; i < a.numel(); ++i)
        if (!(a.data()[i] > 0.0))
            throw std::domain_error("log_elem: input must be strictly positive");
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / an->value[i];
    });
    for (size_t i = 0; i < out.numel(); ++i) out.data()[i] = std::log(a.data()[i]);
    return out;
}

inline Tensor sum_all(const Tensor& a) {
    auto an = a.node();
    Tensor out = ag::make_op({1, 1}, {an}, [an](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < an->value.size(); ++i) g[i] += self.grad[0];
    });
    double s = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    out.data()[0] = s;
    return out;
}

/// Column sums: M x N -> 1 x N.
inline Tensor sum_rows(const Tensor& a) {
    const int M = a.rows(), N = a.cols();
    auto an = a.node();
    Tensor out = ag::make_op({1, N}, {an}, [an, M, N](ag::Node& self) {
        double* g = an->grad_ptr();
        for (int r = 0; r < M; ++r)
            for (int c = 0; c < N; ++c) g[static_cast<size_t>(r) * N + c] += self.grad[c];
    });
    for (int c = 0; c < N; ++c) {
        double s = 0.0;
        for (int r = 0; r < M; ++r) s += a.at(r, c);
        out.data()[c] = s;
    }
    return out;
}

/// Adds a constant mask vector to every row. Entries at or below the mask
/// threshold zero out under softmax; a fully-masked mask is a hard error.
inline Tensor masked_add(const Tensor& a, const std::vector<double>& mask) {
    if (static_cast<int>(mask.size()) != a.cols())
        throw std::invalid_argument("masked_add: mask length must equal columns");
    bool any_open = false;
    for (double m : mask) any_open = any_open || m > kMaskThreshold;
    if (!any_open) throw std::domain_error("masked_add: all candidates masked");
    const int M = a.rows(), N = a.cols();
    auto an = a.node();
    Tensor out = ag::make_op(a.shape(), {an}, [an](ag::Node& self) {
        double* g = an->grad_ptr();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
    for (int r = 0; r < M; ++r)
        for (int c = 0; c < N; ++c)
            out.data()[static_cast<size_t>(r) * N + c] = a.at(r, c) + mask[c];
    return out;
}

/// Selects one element as a 1x1 tensor.
inline Tensor pick(const Tensor& a, int r, int c) {
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
        throw std::invalid_argument("pick: index out of range");
    const int N = a.cols();
    auto an = a.node();
    Tensor out = ag::make_op({1, 1}, {an}, [an, r, c, N](ag::Node& self) {
        an->grad_ptr()[static_cast<size_t>(r) * N + c] += self.grad[0];
    });
    out.data()[0] = a.at(r, c);
    return out;
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable requires_grad node; calling twice on one loss is an error.
inline void backward(const Tensor& loss) {
    ag::Node* root = loss.node().get();
    if (root->numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (root->seeded) throw std::logic_error("backward: already run for this loss");
    root->seeded = true;
    if (!root->requires_grad) return;  // loss does not depend on any parameter

    std::vector<ag::Node*> order;
    std::unordered_set<ag::Node*> visited;
    std::vector<std::pair<ag::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            ag::Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->grad_ptr()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        ag::Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

/// Named parameter tensors with stable iteration order plus Adam state.
class ParameterStore {
  public:
    Tensor create(const std::string& name, int rows, int cols, std::vector<double> values) {
        if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        Tensor t = Tensor::from(rows, cols, std::move(values));
        t.set_requires_grad(true);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        tensors_.push_back(t);
        moment1_.emplace_back(t.numel(), 0.0);
        moment2_.emplace_back(t.numel(), 0.0);
        return t;
    }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("no such parameter: " + name);
        return tensors_[it->second];
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<std::string>& names() const { return names_; }
    size_t size() const { return names_.size(); }
    Tensor at(size_t i) const { return tensors_[i]; }
    int64_t step_count() const { return step_; }

    void zero_grad() {
        for (auto& t : tensors_) {
            auto& g = t.node()->grad;
            std::fill(g.begin(), g.end(), 0.0);
        }
    }

    double grad_norm() const {
        double s = 0.0;
        for (const auto& t : tensors_)
            for (double g : t.node()->grad) s += g * g;
        return std::sqrt(s);
    }

    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& t : tensors_) n += t.numel();
        return n;
    }

    /// One Adam update with bias correction. Skipped entirely (returns
    /// false) when any gradient entry is non-finite.
    bool adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
        for (const auto& t : tensors_)
            for (double g : t.node()->grad)
                if (!std::isfinite(g)) return false;
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
        for (size_t k = 0; k < tensors_.size(); ++k) {
            auto& node = *tensors_[k].node();
            if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
            for (size_t i = 0; i < node.value.size(); ++i) {
                const double g = node.grad[i];
                moment1_[k][i] = beta1 * moment1_[k][i] + (1.0 - beta1) * g;
                moment2_[k][i] = beta2 * moment2_[k][i] + (1.0 - beta2) * g * g;
                const double mhat = moment1_[k][i] / bc1;
                const double vhat = moment2_[k][i] / bc2;
                node.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        return true;
    }

    // --- checkpoint container ---
    // Byte layout (little-endian):
    //   magic "WSCK", u32 version=1, u32 meta_len, meta bytes (UTF-8 JSON),
    //   u32 n_tensors, then per tensor: u32 name_len, name bytes, u32 rows,
    //   u32 cols, rows*cols f64 values.
    //   u8 has_optimizer; if 1: u64 step_count, then per tensor in the same
    //   order: rows*cols f64 first moments, rows*cols f64 second moments.

    void save(const std::string& path, const std::string& meta,
              bool include_optimizer = true) const {
        static_assert(std::endian::native == std::endian::little,
                      "checkpoint writer assumes a little-endian host");
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
        auto put_u32 = [&f](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
        auto put_u64 = [&f](uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); };
        f.write("WSCK", 4);
        put_u32(1);
        put_u32(static_cast<uint32_t>(meta.size()));
        f.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        put_u32(static_cast<uint32_t>(tensors_.size()));
        for (size_t k = 0; k < tensors_.size(); ++k) {
            put_u32(static_cast<uint32_t>(names_[k].size()));
            f.write(names_[k].data(), static_cast<std::streamsize>(names_[k].size()));
            put_u32(static_cast<uint32_t>(tensors_[k].rows()));
            put_u32(static_cast<uint32_t>(tensors_[k].cols()));
            f.write(reinterpret_cast<const char*>(tensors_[k].data()),
                    static_cast<std::streamsize>(tensors_[k].numel() * sizeof(double)));
        }
        const uint8_t has_opt = include_optimizer ? 1 : 0;
        f.write(reinterpret_cast<const char*>(&has_opt), 1);
        if (include_optimizer) {
            put_u64(static_cast<uint64_t>(step_));
            for (size_t k = 0; k < tensors_.size(); ++k) {
                f.write(reinterpret_cast<const char*>(moment1_[k].data()),
                        static_cast<std::streamsize>(moment1_[k].size() * sizeof(double)));
                f.write(reinterpret_cast<const char*>(moment2_[k].data()),
                        static_cast<std::streamsize>(moment2_[k].size() * sizeof(double)));
            }
        }
        if (!f) throw std::runtime_error("checkpoint write failed: " + path);
    }

    /// Replaces the store contents. Returns the embedded metadata string.
    std::string load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, "WSCK", 4) != 0)
            throw std::runtime_error("not a windsched checkpoint: " + path);
        auto get_u32 = [&f]() {
            uint32_t v = 0;
            f.read(reinterpret_cast<char*>(&v), 4);
            return v;
        };
        auto get_u64 = [&f]() {
            uint64_t v = 0;
            f.read(reinterpret_cast<char*>(&v), 8);
            return v;
        };
        const uint32_t version = get_u32();
        if (version != 1)
            throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
        std::string meta(get_u32(), '\0');
        f.read(meta.data(), static_cast<std::streamsize>(meta.size()));
        const uint32_t n = get_u32();
        names_.clear();
        tensors_.clear();
        moment1_.clear();
        moment2_.clear();
        index_.clear();
        step_ = 0;
        for (uint32_t k = 0; k < n; ++k) {
            std::string name(get_u32(), '\0');
            f.read(name.data(), static_cast<std::streamsize>(name.size()));
            const uint32_t rows = get_u32(), cols = get_u32();
            std::vector<double> vals(static_cast<size_t>(rows) * cols);
            f.read(reinterpret_cast<char*>(vals.data()),
                   static_cast<std::streamsize>(vals.size() * sizeof(double)));
            if (!f) throw std::runtime_error("truncated checkpoint: " + path);
            create(name, static_cast<int>(rows), static_cast<int>(cols), std::move(vals));
        }
        uint8_t has_opt = 0;
        f.read(reinterpret_cast<char*>(&has_opt), 1);
        if (f && has_opt) {
            step_ = static_cast<int64_t>(get_u64());
            for (uint32_t k = 0; k < n; ++k) {
                f.read(reinterpret_cast<char*>(moment1_[k].data()),
                       static_cast<std::streamsize>(moment1_[k].size() * sizeof(double)));
                f.read(reinterpret_cast<char*>(moment2_[k].data()),
                       static_cast<std::streamsize>(moment2_[k].size() * sizeof(double)));
            }
            if (!f) throw std::runtime_error("truncated optimizer state: " + path);
        }
        return meta;
    }

  private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::vector<std::vector<double>> moment1_, moment2_;
    std::unordered_map<std::string, int> index_;
    int64_t step_ = 0;
};

}  // namespace windsched
