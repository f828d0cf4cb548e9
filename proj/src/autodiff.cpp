#include "giftlab/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace giftlab::ad {

namespace {

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.shape_str() + " vs " +
                                b.shape_str() + ")");
}

[[noreturn]] void shape_error(const char* op, const Mat& a) {
    throw std::invalid_argument(std::string(op) + ": bad operand shape " + a.shape_str());
}

void check_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Elementwise binary op with scalar broadcast on either side.
template <class Fwd, class Bwd>
Var elementwise(Var a, Var b, const char* op, Fwd fwd, Bwd bwd) {
    check_same_tape(a, b, op);
    const Mat& av = a.value();
    const Mat& bv = b.value();
    const bool a_scalar = av.is_scalar();
    const bool b_scalar = bv.is_scalar();
    if (!av.same_shape(bv) && !a_scalar && !b_scalar) shape_error(op, av, bv);

    const Mat& shape_src = a_scalar ? bv : av;
    Mat out(shape_src.rows, shape_src.cols);
    const int n = out.size();
    for (int i = 0; i < n; ++i) {
        const double x = av[a_scalar ? 0 : i];
        const double y = bv[b_scalar ? 0 : i];
        out[i] = fwd(x, y);
    }
    const int ida = a.id, idb = b.id;
    return a.tape->append(std::move(out), {ida, idb}, [ida, idb, a_scalar, b_scalar, bwd](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        Mat& ga = t.node(ida).grad;
        Mat& gb = t.node(idb).grad;
        const Mat& av2 = t.node(ida).value;
        const Mat& bv2 = t.node(idb).value;
        const int n2 = s.value.size();
        for (int i = 0; i < n2; ++i) {
            const double x = av2[a_scalar ? 0 : i];
            const double y = bv2[b_scalar ? 0 : i];
            const double g = s.grad[i];
            double dx = 0.0, dy = 0.0;
            bwd(x, y, g, dx, dy);
            ga[a_scalar ? 0 : i] += dx;
            gb[b_scalar ? 0 : i] += dy;
        }
    });
}

template <class Fwd, class Bwd>
Var unary(Var a, const char* /*op*/, Fwd fwd, Bwd bwd) {
    const Mat& av = a.value();
    Mat out(av.rows, av.cols);
    const int n = out.size();
    for (int i = 0; i < n; ++i) out[i] = fwd(av[i]);
    const int ida = a.id;
    return a.tape->append(std::move(out), {ida}, [ida, bwd](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        Mat& ga = t.node(ida).grad;
        const Mat& av2 = t.node(ida).value;
        const int n2 = s.value.size();
        for (int i = 0; i < n2; ++i) ga[i] += s.grad[i] * bwd(av2[i], s.value[i]);
    });
}

}  // namespace

const Mat& Var::value() const { return tape->node(id).value; }
const Mat& Var::grad() const { return tape->node(id).grad; }

Var Tape::append(Mat value, std::vector<int> parents, std::function<void(Tape&, int)> backprop) {
    Node n;
    n.grad = Mat::zeros(value.rows, value.cols);
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
    if (root.tape != this) throw std::invalid_argument("backward: root not on this tape");
    if (!nodes_[root.id].value.is_scalar())
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    nodes_[root.id].value.shape_str());
    if (backward_done_) throw std::logic_error("backward: already run on this tape");
    backward_done_ = true;
    nodes_[root.id].grad[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
    }
}

Var constant(Tape& t, Mat value) { return t.append(std::move(value), {}, nullptr); }

Var add(Var a, Var b) {
    return elementwise(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double g, double& dx, double& dy) {
            dx = g;
            dy = g;
        });
}

Var sub(Var a, Var b) {
    return elementwise(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double g, double& dx, double& dy) {
            dx = g;
            dy = -g;
        });
}

Var mul(Var a, Var b) {
    return elementwise(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& dx, double& dy) {
            dx = g * y;
            dy = g * x;
        });
}

Var div(Var a, Var b) {
    return elementwise(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& dx, double& dy) {
            dx = g / y;
            dy = -g * x / (y * y);
        });
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Mat& av = a.value();
    const Mat& bv = b.value();
    if (av.cols != bv.rows) shape_error("matmul", av, bv);
    Mat out(av.rows, bv.cols);
    for (int i = 0; i < av.rows; ++i)
        for (int j = 0; j < bv.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < av.cols; ++k) acc += av.at(i, k) * bv.at(k, j);
            out.at(i, j) = acc;
        }
    const int ida = a.id, idb = b.id;
    return a.tape->append(std::move(out), {ida, idb}, [ida, idb](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        const Mat& av2 = t.node(ida).value;
        const Mat& bv2 = t.node(idb).value;
        Mat& ga = t.node(ida).grad;
        Mat& gb = t.node(idb).grad;
        // dA += G * B^T ; dB += A^T * G
        for (int i = 0; i < av2.rows; ++i)
            for (int k = 0; k < av2.cols; ++k) {
                double acc = 0.0;
                for (int j = 0; j < bv2.cols; ++j) acc += s.grad.at(i, j) * bv2.at(k, j);
                ga.at(i, k) += acc;
            }
        for (int k = 0; k < bv2.rows; ++k)
            for (int j = 0; j < bv2.cols; ++j) {
                double acc = 0.0;
                for (int i = 0; i < av2.rows; ++i) acc += av2.at(i, k) * s.grad.at(i, j);
                gb.at(k, j) += acc;
            }
    });
}

Var scale(Var a, double s) {
    return unary(
        a, "scale", [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var add_const(Var a, double c) {
    return unary(
        a, "add_const", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
    return unary(
        a, "sqrt", [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
    return unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var logsigmoid(Var a) {
    return unary(
        a, "logsigmoid",
        [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 - stable_sigmoid(x); });
}

Var clip(Var a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clip: lo > hi");
    return unary(
        a, "clip",
        [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var minimum(Var a, Var b) {
    return elementwise(
        a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double g, double& dx, double& dy) {
            if (x <= y)
                dx = g;
            else
                dy = g;
        });
}

Var stop_gradient(Var a) { return a.tape->append(a.value(), {}, nullptr); }

Var log_softmax(Var a) {
    const Mat& av = a.value();
    Mat out(av.rows, av.cols);
    for (int r = 0; r < av.rows; ++r) {
        double mx = av.at(r, 0);
        for (int c = 1; c < av.cols; ++c) mx = std::max(mx, av.at(r, c));
        double s = 0.0;
        for (int c = 0; c < av.cols; ++c) s += std::exp(av.at(r, c) - mx);
        const double lse = mx + std::log(s);
        for (int c = 0; c < av.cols; ++c) out.at(r, c) = av.at(r, c) - lse;
    }
    const int ida = a.id;
    return a.tape->append(std::move(out), {ida}, [ida](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        Mat& ga = t.node(ida).grad;
        for (int r = 0; r < s.value.rows; ++r) {
            double gsum = 0.0;
            for (int c = 0; c < s.value.cols; ++c) gsum += s.grad.at(r, c);
            for (int c = 0; c < s.value.cols; ++c)
                ga.at(r, c) += s.grad.at(r, c) - std::exp(s.value.at(r, c)) * gsum;
        }
    });
}

Var gather(Var a, const std::vector<int>& cols) {
    const Mat& av = a.value();
    if (av.rows != 1) shape_error("gather", av);
    Mat out(1, static_cast<int>(cols.size()));
    for (size_t i = 0; i < cols.size(); ++i) {
        if (cols[i] < 0 || cols[i] >= av.cols)
            throw std::invalid_argument("gather: index " + std::to_string(cols[i]) +
                                        " out of range for " + av.shape_str());
        out[i] = av[cols[i]];
    }
    const int ida = a.id;
    return a.tape->append(std::move(out), {ida}, [ida, cols](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        Mat& ga = t.node(ida).grad;
        for (size_t i = 0; i < cols.size(); ++i) ga[cols[i]] += s.grad[i];
    });
}

Var row(Var a, int i) {
    const Mat& av = a.value();
    if (i < 0 || i >= av.rows)
        throw std::invalid_argument("row: index " + std::to_string(i) + " out of range for " +
                                    av.shape_str());
    Mat out(1, av.cols);
    for (int c = 0; c < av.cols; ++c) out[c] = av.at(i, c);
    const int ida = a.id;
    return a.tape->append(std::move(out), {ida}, [ida, i](Tape& t, int self) {
        const Tape::Node& s = t.node(self);
        Mat& ga = t.node(ida).grad;
        for (int c = 0; c < s.value.cols; ++c) ga.at(i, c) += s.grad[c];
    });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    int total = 0;
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (const Var& p : parts) {
        if (p.tape != &t) throw std::invalid_argument("concat_cols: operand on different tape");
        if (p.value().rows != 1) shape_error("concat_cols", p.value());
        total += p.value().cols;
        ids.push_back(p.id);
    }
    Mat out(1, total);
    int off = 0;
    for (const Var& p : parts) {
        const Mat& v = p.value();
        for (int c = 0; c < v.cols; ++c) out[off + c] = v[c];
        off += v.cols;
    }
    return t.append(std::move(out), ids, [ids](Tape& tp, int self) {
        const Tape::Node& s = tp.node(self);
        int o = 0;
        for (int id : ids) {
            Mat& g = tp.node(id).grad;
            for (int c = 0; c < g.cols; ++c) g[c] += s.grad[o + c];
            o += g.cols;
        }
    });
}

Var sum(Var a) {
    const Mat& av = a.value();
    double acc = 0.0;
    for (int i = 0; i < av.size(); ++i) acc += av[i];
    const int ida = a.id;
    return a.tape->append(Mat::scalar(acc), {ida}, [ida](Tape& t, int self) {
        const double g = t.node(self).grad[0];
        Mat& ga = t.node(ida).grad;
        for (int i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var mean(Var a) {
    const Mat& av = a.value();
    if (av.size() == 0) throw std::invalid_argument("mean: empty operand");
    double acc = 0.0;
    for (int i = 0; i < av.size(); ++i) acc += av[i];
    const int n = av.size();
    const int ida = a.id;
    return a.tape->append(Mat::scalar(acc / n), {ida}, [ida, n](Tape& t, int self) {
        const double g = t.node(self).grad[0] / n;
        Mat& ga = t.node(ida).grad;
        for (int i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

}  // namespace giftlab::ad
