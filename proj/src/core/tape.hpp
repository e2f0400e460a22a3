#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace uwd {

// Forward MAC counter for cost comparisons. Enabled only by measurement code.
struct MacCounter {
    static inline thread_local bool enabled = false;
    static inline thread_local int64_t macs = 0;
    static void add(int64_t n) {
        if (enabled) macs += n;
    }
    static void reset() { macs = 0; }
};

// A learnable tensor. Gradients accumulate across tape backward passes until
// zero_grad(); m/v are Adam moments, checkpointed with the value.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m, v;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> val) : name(std::move(n)), value(std::move(val)) {
        grad = Tensor<T>::zeros(value.shape);
        m = Tensor<T>::zeros(value.shape);
        v = Tensor<T>::zeros(value.shape);
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

struct ConvSpec {
    int stride = 1;
    int dilation = 1;
    bool same_pad = true;       // false = valid
    bool replicate_pad = false; // zero padding otherwise
};

// Define-by-run reverse-mode tape over dense tensors. Node ids index into the
// arena; creation order is a topological order, so backward() walks ids in
// reverse. With grad disabled the ops degenerate to eager evaluation.
template <typename T>
class Tape {
public:
    using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapM = Eigen::Map<RowMat>;
    using MapCM = Eigen::Map<const RowMat>;

    struct Node {
        Tensor<T> value;
        Tensor<T> grad; // allocated lazily during backward
        std::function<void(Tape&, int)> back;
        bool needs_grad = false;
    };

    bool grad_enabled() const { return grad_enabled_; }
    void set_grad_enabled(bool on) { grad_enabled_ = on; }

    struct NoGrad {
        Tape& t;
        bool prev;
        explicit NoGrad(Tape& tape) : t(tape), prev(tape.grad_enabled_) { t.grad_enabled_ = false; }
        ~NoGrad() { t.grad_enabled_ = prev; }
    };

    int size() const { return (int)nodes_.size(); }

    const Tensor<T>& val(int id) const { return nodes_[(size_t)id].value; }
    bool needs_grad(int id) const { return nodes_[(size_t)id].needs_grad; }

    Tensor<T>& grad_ref(int id) {
        Node& n = nodes_[(size_t)id];
        if (n.grad.data.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
        return n.grad;
    }
    bool has_grad(int id) const { return !nodes_[(size_t)id].grad.data.empty(); }

    int constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

    int leaf(Tensor<T> v, bool requires_grad) {
        return push(std::move(v), requires_grad && grad_enabled_, nullptr);
    }

    int param(Parameter<T>& p) {
        if (!grad_enabled_) return push(p.value, false, nullptr);
        Parameter<T>* pp = &p;
        int id = push(p.value, true, nullptr);
        nodes_[(size_t)id].back = [pp](Tape& t, int self) {
            const Tensor<T>& g = t.grad_ref(self);
            for (int64_t i = 0; i < g.numel(); ++i) pp->grad.data[(size_t)i] += g.data[(size_t)i];
        };
        return id;
    }

    // ---- elementwise ----

    int add(int a, int b) {
        check_same_shape(val(a), val(b), "add");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] += vb.data[(size_t)i];
        return binary(std::move(out), a, b, [](Tape& t, int self, int a_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            t.accumulate(a_, g);
            t.accumulate(b_, g);
        });
    }

    int sub(int a, int b) {
        check_same_shape(val(a), val(b), "sub");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] -= vb.data[(size_t)i];
        return binary(std::move(out), a, b, [](Tape& t, int self, int a_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            t.accumulate(a_, g);
            if (t.needs_grad(b_)) {
                Tensor<T> ng = g;
                for (auto& x : ng.data) x = -x;
                t.accumulate(b_, ng);
            }
        });
    }

    int mul(int a, int b) {
        check_same_shape(val(a), val(b), "mul");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] *= vb.data[(size_t)i];
        return binary(std::move(out), a, b, [](Tape& t, int self, int a_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            if (t.needs_grad(a_)) {
                Tensor<T> ga = g;
                const Tensor<T>& vb_ = t.val(b_);
                for (int64_t i = 0; i < ga.numel(); ++i) ga.data[(size_t)i] *= vb_.data[(size_t)i];
                t.accumulate(a_, ga);
            }
            if (t.needs_grad(b_)) {
                Tensor<T> gb = g;
                const Tensor<T>& va_ = t.val(a_);
                for (int64_t i = 0; i < gb.numel(); ++i) gb.data[(size_t)i] *= va_.data[(size_t)i];
                t.accumulate(b_, gb);
            }
        });
    }

    int div(int a, int b) {
        check_same_shape(val(a), val(b), "div");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] /= vb.data[(size_t)i];
        return binary(std::move(out), a, b, [](Tape& t, int self, int a_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            const Tensor<T>& va_ = t.val(a_);
            const Tensor<T>& vb_ = t.val(b_);
            if (t.needs_grad(a_)) {
                Tensor<T> ga = g;
                for (int64_t i = 0; i < ga.numel(); ++i) ga.data[(size_t)i] /= vb_.data[(size_t)i];
                t.accumulate(a_, ga);
            }
            if (t.needs_grad(b_)) {
                Tensor<T> gb = g;
                for (int64_t i = 0; i < gb.numel(); ++i) {
                    T d = vb_.data[(size_t)i];
                    gb.data[(size_t)i] *= -va_.data[(size_t)i] / (d * d);
                }
                t.accumulate(b_, gb);
            }
        });
    }

    int add_scalar(int a, T s) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x += s;
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            t.accumulate(a_, t.grad_ref(self));
        });
    }

    int mul_scalar(int a, T s) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x *= s;
        return unary(std::move(out), a, [s](Tape& t, int self, int a_) {
            Tensor<T> g = t.grad_ref(self);
            for (auto& x : g.data) x *= s;
            t.accumulate(a_, g);
        });
    }

    int silu(int a) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x = x / (T(1) + std::exp(-x));
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            const Tensor<T>& g = t.grad_ref(self);
            const Tensor<T>& x = t.val(a_);
            Tensor<T> ga = g;
            for (int64_t i = 0; i < ga.numel(); ++i) {
                T s = T(1) / (T(1) + std::exp(-x.data[(size_t)i]));
                ga.data[(size_t)i] *= s * (T(1) + x.data[(size_t)i] * (T(1) - s));
            }
            t.accumulate(a_, ga);
        });
    }

    int abs_op(int a) {
        Tensor<T> out = val(a);
        for (auto& x : out.data) x = std::abs(x);
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            const Tensor<T>& g = t.grad_ref(self);
            const Tensor<T>& x = t.val(a_);
            Tensor<T> ga = g;
            for (int64_t i = 0; i < ga.numel(); ++i) {
                T v = x.data[(size_t)i];
                ga.data[(size_t)i] *= v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
            }
            t.accumulate(a_, ga);
        });
    }

    int detach(int a) { return push(val(a), false, nullptr); }

    int reshape(int a, std::vector<int> shape) {
        Tensor<T> out = val(a).reshaped(shape);
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            Tensor<T> g = t.grad_ref(self).reshaped(t.val(a_).shape);
            t.accumulate(a_, g);
        });
    }

    // ---- broadcast over {N,H,W,C} ----

    // x {N,H,W,C} + bias {C}
    int add_bias_c(int x, int b) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vb = val(b);
        require(vx.ndim() == 4 && vb.ndim() == 1 && vb.dim(0) == vx.dim(3), "add_bias_c shapes");
        Tensor<T> out = vx;
        const int C = vx.dim(3);
        for (int64_t i = 0; i < out.numel(); ++i) out.data[(size_t)i] += vb.data[(size_t)(i % C)];
        return binary(std::move(out), x, b, [](Tape& t, int self, int x_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            t.accumulate(x_, g);
            if (t.needs_grad(b_)) {
                const int C = t.val(b_).dim(0);
                Tensor<T> gb = Tensor<T>::zeros({C});
                for (int64_t i = 0; i < g.numel(); ++i) gb.data[(size_t)(i % C)] += g.data[(size_t)i];
                t.accumulate(b_, gb);
            }
        });
    }

    // x {N,H,W,C} + b {N,C} broadcast over spatial dims
    int add_nc(int x, int b) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vb = val(b);
        require(vx.ndim() == 4 && vb.ndim() == 2 && vb.dim(0) == vx.dim(0) &&
                    vb.dim(1) == vx.dim(3),
                "add_nc shapes");
        Tensor<T> out = vx;
        broadcast_nc(out, vb, [](T& o, T s) { o += s; });
        return binary(std::move(out), x, b, [](Tape& t, int self, int x_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            t.accumulate(x_, g);
            if (t.needs_grad(b_)) {
                Tensor<T> gb = Tensor<T>::zeros(t.val(b_).shape);
                reduce_nc(g, gb, nullptr);
                t.accumulate(b_, gb);
            }
        });
    }

    // x {N,H,W,C} * g {N,C}
    int mul_nc(int x, int s) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vs = val(s);
        require(vx.ndim() == 4 && vs.ndim() == 2 && vs.dim(0) == vx.dim(0) &&
                    vs.dim(1) == vx.dim(3),
                "mul_nc shapes");
        Tensor<T> out = vx;
        broadcast_nc(out, vs, [](T& o, T v) { o *= v; });
        return binary(std::move(out), x, s, [](Tape& t, int self, int x_, int s_) {
            const Tensor<T>& g = t.grad_ref(self);
            if (t.needs_grad(x_)) {
                Tensor<T> gx = g;
                broadcast_nc(gx, t.val(s_), [](T& o, T v) { o *= v; });
                t.accumulate(x_, gx);
            }
            if (t.needs_grad(s_)) {
                Tensor<T> gs = Tensor<T>::zeros(t.val(s_).shape);
                reduce_nc(g, gs, &t.val(x_));
                t.accumulate(s_, gs);
            }
        });
    }

    // ---- shape ops over the last dimension ----

    int concat_last(const std::vector<int>& parts) {
        require(!parts.empty(), "concat_last: empty");
        std::vector<int> shape = val(parts[0]).shape;
        int total = 0;
        for (int p : parts) {
            const Tensor<T>& v = val(p);
            require(v.ndim() == (int)shape.size(), "concat_last ndim");
            for (int i = 0; i + 1 < v.ndim(); ++i) require(v.dim(i) == shape[(size_t)i], "concat_last dims");
            total += v.dim(v.ndim() - 1);
        }
        shape.back() = total;
        Tensor<T> out(shape);
        const int64_t rows = out.numel() / total;
        int64_t off = 0;
        for (int p : parts) {
            const Tensor<T>& v = val(p);
            const int c = v.dim(v.ndim() - 1);
            for (int64_t r = 0; r < rows; ++r)
                std::copy(v.ptr() + r * c, v.ptr() + (r + 1) * c, out.ptr() + r * total + off);
            off += c;
        }
        bool ng = false;
        for (int p : parts) ng = ng || needs_grad(p);
        ng = ng && grad_enabled_;
        int id = push(std::move(out), ng, nullptr);
        if (ng) {
            std::vector<int> ps = parts;
            nodes_[(size_t)id].back = [ps, total, rows](Tape& t, int self) {
                const Tensor<T>& g = t.grad_ref(self);
                int64_t off_ = 0;
                for (int p : ps) {
                    const int c = t.val(p).dim(t.val(p).ndim() - 1);
                    if (t.needs_grad(p)) {
                        Tensor<T> gp = Tensor<T>::zeros(t.val(p).shape);
                        for (int64_t r = 0; r < rows; ++r)
                            std::copy(g.ptr() + r * total + off_, g.ptr() + r * total + off_ + c,
                                      gp.ptr() + r * c);
                        t.accumulate(p, gp);
                    }
                    off_ += c;
                }
            };
        }
        return id;
    }

    int slice_last(int a, int c0, int c1) {
        const Tensor<T>& v = val(a);
        const int C = v.dim(v.ndim() - 1);
        require(0 <= c0 && c0 < c1 && c1 <= C, "slice_last range");
        std::vector<int> shape = v.shape;
        shape.back() = c1 - c0;
        Tensor<T> out(shape);
        const int64_t rows = v.numel() / C;
        const int w = c1 - c0;
        for (int64_t r = 0; r < rows; ++r)
            std::copy(v.ptr() + r * C + c0, v.ptr() + r * C + c1, out.ptr() + r * w);
        return unary(std::move(out), a, [c0, w, C, rows](Tape& t, int self, int a_) {
            const Tensor<T>& g = t.grad_ref(self);
            Tensor<T> ga = Tensor<T>::zeros(t.val(a_).shape);
            for (int64_t r = 0; r < rows; ++r)
                std::copy(g.ptr() + r * w, g.ptr() + (r + 1) * w, ga.ptr() + r * C + c0);
            t.accumulate(a_, ga);
        });
    }

    // ---- linear algebra ----

    // x {N,F} @ w {F,G} + b {G}; pass b = -1 for no bias
    int linear(int x, int w, int b) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vw = val(w);
        require(vx.ndim() == 2 && vw.ndim() == 2 && vx.dim(1) == vw.dim(0), "linear shapes");
        const int N = vx.dim(0), F = vx.dim(1), G = vw.dim(1);
        Tensor<T> out({N, G});
        MapM(out.ptr(), N, G).noalias() = MapCM(vx.ptr(), N, F) * MapCM(vw.ptr(), F, G);
        MacCounter::add((int64_t)N * F * G);
        if (b >= 0) {
            const Tensor<T>& vb = val(b);
            require(vb.ndim() == 1 && vb.dim(0) == G, "linear bias shape");
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < G; ++g) out.data[(size_t)(n * G + g)] += vb.data[(size_t)g];
        }
        bool ng = grad_enabled_ && (needs_grad(x) || needs_grad(w) || (b >= 0 && needs_grad(b)));
        int id = push(std::move(out), ng, nullptr);
        if (ng) {
            nodes_[(size_t)id].back = [x, w, b, N, F, G](Tape& t, int self) {
                const Tensor<T>& g = t.grad_ref(self);
                MapCM gm(g.ptr(), N, G);
                if (t.needs_grad(x)) {
                    Tensor<T> gx({N, F});
                    MapM(gx.ptr(), N, F).noalias() = gm * MapCM(t.val(w).ptr(), F, G).transpose();
                    t.accumulate(x, gx);
                }
                if (t.needs_grad(w)) {
                    Tensor<T> gw({F, G});
                    MapM(gw.ptr(), F, G).noalias() = MapCM(t.val(x).ptr(), N, F).transpose() * gm;
                    t.accumulate(w, gw);
                }
                if (b >= 0 && t.needs_grad(b)) {
                    Tensor<T> gb = Tensor<T>::zeros({G});
                    for (int n = 0; n < N; ++n)
                        for (int c = 0; c < G; ++c) gb.data[(size_t)c] += g.data[(size_t)(n * G + c)];
                    t.accumulate(b, gb);
                }
            };
        }
        return id;
    }

    // a {P,Q} @ b {Q,R}
    int matmul(int a, int b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        require(va.ndim() == 2 && vb.ndim() == 2 && va.dim(1) == vb.dim(0), "matmul shapes");
        const int P = va.dim(0), Q = va.dim(1), R = vb.dim(1);
        Tensor<T> out({P, R});
        MapM(out.ptr(), P, R).noalias() = MapCM(va.ptr(), P, Q) * MapCM(vb.ptr(), Q, R);
        MacCounter::add((int64_t)P * Q * R);
        return binary(std::move(out), a, b, [P, Q, R](Tape& t, int self, int a_, int b_) {
            const Tensor<T>& g = t.grad_ref(self);
            MapCM gm(g.ptr(), P, R);
            if (t.needs_grad(a_)) {
                Tensor<T> ga({P, Q});
                MapM(ga.ptr(), P, Q).noalias() = gm * MapCM(t.val(b_).ptr(), Q, R).transpose();
                t.accumulate(a_, ga);
            }
            if (t.needs_grad(b_)) {
                Tensor<T> gb({Q, R});
                MapM(gb.ptr(), Q, R).noalias() = MapCM(t.val(a_).ptr(), P, Q).transpose() * gm;
                t.accumulate(b_, gb);
            }
        });
    }

    // ---- reductions ----

    int mean_all(int a) {
        const Tensor<T>& v = val(a);
        T s = 0;
        for (T x : v.data) s += x;
        Tensor<T> out({1});
        out.data[0] = s / (T)v.numel();
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            const T g = t.grad_ref(self).data[0] / (T)t.val(a_).numel();
            Tensor<T> ga = Tensor<T>::full(t.val(a_).shape, g);
            t.accumulate(a_, ga);
        });
    }

    int sum_all(int a) {
        const Tensor<T>& v = val(a);
        T s = 0;
        for (T x : v.data) s += x;
        Tensor<T> out({1});
        out.data[0] = s;
        return unary(std::move(out), a, [](Tape& t, int self, int a_) {
            Tensor<T> ga = Tensor<T>::full(t.val(a_).shape, t.grad_ref(self).data[0]);
            t.accumulate(a_, ga);
        });
    }

    // ---- backward ----

    void backward(int root) {
        require(val(root).numel() == 1, "backward: root must be scalar");
        grad_ref(root).data[0] = T(1);
        for (int i = root; i >= 0; --i) {
            Node& n = nodes_[(size_t)i];
            if (n.back && !n.grad.data.empty()) n.back(*this, i);
        }
    }

    void accumulate(int id, const Tensor<T>& g) {
        if (!needs_grad(id)) return;
        Tensor<T>& dst = grad_ref(id);
        for (int64_t i = 0; i < g.numel(); ++i) dst.data[(size_t)i] += g.data[(size_t)i];
    }

    // ---- conv / pooling / norm / attention live in tape_ops.hpp ----

    int push(Tensor<T> v, bool needs, std::function<void(Tape&, int)> back) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs;
        n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return (int)nodes_.size() - 1;
    }

    template <typename F>
    int unary(Tensor<T> out, int a, F f) {
        bool ng = grad_enabled_ && needs_grad(a);
        int id = push(std::move(out), ng, nullptr);
        if (ng)
            nodes_[(size_t)id].back = [a, f](Tape& t, int self) { f(t, self, a); };
        return id;
    }

    template <typename F>
    int binary(Tensor<T> out, int a, int b, F f) {
        bool ng = grad_enabled_ && (needs_grad(a) || needs_grad(b));
        int id = push(std::move(out), ng, nullptr);
        if (ng)
            nodes_[(size_t)id].back = [a, b, f](Tape& t, int self) { f(t, self, a, b); };
        return id;
    }

    static void require(bool cond, const char* what) {
        if (!cond) throw UsageError(std::string("tape: ") + what);
    }

    // int conv2d(...), groupnorm(...), attention(...) etc. are defined in
    // tape_ops.hpp as member functions via include, to keep this file readable.
    int conv2d(int x, int w, int b, const ConvSpec& spec);
    int depthwise_valid(int x, const Tensor<T>& kernel);
    int avgpool_global(int x);
    int upsample2x(int x);
    int groupnorm(int x, int gamma, int beta, int groups, T eps);
    int attention(int q, int k, int v, const std::vector<std::vector<int>>& tiles);

private:
    template <typename F>
    static void broadcast_nc(Tensor<T>& x, const Tensor<T>& s, F f) {
        const int N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
        for (int n = 0; n < N; ++n) {
            const T* sp = s.ptr() + (int64_t)n * C;
            T* xp = x.ptr() + (int64_t)n * HW * C;
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c) f(xp[(int64_t)i * C + c], sp[c]);
        }
    }

    // gb[n,c] += sum_{h,w} g[n,h,w,c] (* x[n,h,w,c] when x != nullptr)
    static void reduce_nc(const Tensor<T>& g, Tensor<T>& gb, const Tensor<T>* x) {
        const int N = g.dim(0), HW = g.dim(1) * g.dim(2), C = g.dim(3);
        for (int n = 0; n < N; ++n) {
            T* out = gb.ptr() + (int64_t)n * C;
            const T* gp = g.ptr() + (int64_t)n * HW * C;
            const T* xp = x ? x->ptr() + (int64_t)n * HW * C : nullptr;
            for (int i = 0; i < HW; ++i)
                for (int c = 0; c < C; ++c)
                    out[c] += xp ? gp[(int64_t)i * C + c] * xp[(int64_t)i * C + c]
                                 : gp[(int64_t)i * C + c];
        }
    }

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

} // namespace uwd

#include "core/tape_ops.hpp"
