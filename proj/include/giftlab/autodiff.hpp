#pragma once

#include <functional>
#include <vector>

#include "giftlab/mat.hpp"

namespace giftlab::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    const Mat& grad() const;
};

// Records one forward pass. Nodes are appended in creation order, which is a
// topological order, so backward() is a single reverse sweep. A tape is single
// shot: backward() may run once, a second call is rejected.
class Tape {
  public:
    struct Node {
        Mat value;
        Mat grad;
        std::vector<int> parents;
        // accumulates into the parents' grads; null for leaves
        std::function<void(Tape&, int)> backprop;
    };

    Var append(Mat value, std::vector<int> parents, std::function<void(Tape&, int)> backprop);

    Node& node(int id) { return nodes_[id]; }
    const Node& node(int id) const { return nodes_[id]; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Seeds the scalar root with gradient 1 and sweeps the tape in reverse.
    // Throws if root is not 1x1 or if backward already ran on this tape.
    void backward(Var root);

  private:
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

Var constant(Tape& t, Mat value);
inline Var constant(Tape& t, double v) { return constant(t, Mat::scalar(v)); }

// Elementwise binary ops. Shapes must match, or one operand may be 1x1 and is
// broadcast across the other.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var matmul(Var a, Var b);

Var scale(Var a, double s);
Var add_const(Var a, double c);

Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var logsigmoid(Var a);
Var clip(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var stop_gradient(Var a);

// Row-wise log-softmax with max subtraction.
Var log_softmax(Var a);

// Picks columns of a 1xN row vector.
Var gather(Var a, const std::vector<int>& cols);

// Selects row i of a matrix as a 1xC vector.
Var row(Var a, int i);

// Joins 1xCi rows into one 1x(sum Ci) row.
Var concat_cols(Tape& t, const std::vector<Var>& parts);

Var sum(Var a);
Var mean(Var a);

}  // namespace giftlab::ad
