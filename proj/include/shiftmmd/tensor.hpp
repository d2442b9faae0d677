#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shiftmmd/matrix.hpp"

namespace shiftmmd {

// A trainable parameter. Gradients accumulate into `grad` across backward
// calls until zero_grad is invoked.
struct Variable {
    Matrix value;
    Matrix grad;

    explicit Variable(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}
};

void zero_grad(const std::vector<Variable*>& params);

class Tape;

// Lightweight handle to a node on a Tape. Valid only while the Tape lives.
class Tensor {
public:
    Tensor() = default;

    const Matrix& value() const;
    // Gradient of the loss w.r.t. this node; populated by Tape::backward.
    const Matrix& grad() const;
    bool requires_grad() const;
    int rows() const { return value().rows(); }
    int cols() const { return value().cols(); }

private:
    friend class Tape;
    Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Records the forward computation in topological order; backward() replays it
// once in reverse. A Tape represents a single forward/backward pass; training
// loops build a fresh Tape per step.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Untracked input owned by the tape.
    Tensor constant(Matrix v);
    // Untracked input referenced in place; caller keeps it alive.
    Tensor constant_view(const Matrix& v);
    // Tracked parameter; backward accumulates into v.grad.
    Tensor leaf(Variable& v);

    Tensor matmul(Tensor a, Tensor b);
    // X (n x m) plus a bias row (1 x m) broadcast over rows.
    Tensor add_rowvector_bias(Tensor x, Tensor bias);
    Tensor add(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);
    Tensor relu(Tensor x);
    Tensor sigmoid(Tensor x);
    Tensor exp(Tensor x);
    Tensor negate(Tensor x);
    Tensor square(Tensor x);
    Tensor scalar_mul(Tensor x, double c);
    Tensor mean_all(Tensor x);
    Tensor sum_all(Tensor x);
    Tensor concat_cols(Tensor a, Tensor b);
    // D(i,j) = ||a_i - b_j||^2 via the norm expansion, clamped at 0.
    Tensor pairwise_sq_dist(Tensor a, Tensor b);
    // (x + noise) / tau with a fixed noise matrix; the reparameterized inner
    // term of a Relaxed Bernoulli sample.
    Tensor logistic_noise_shift(Tensor x, Matrix noise, double tau);

    // Extension point for fused ops (mixture Gram, stable BCE). `backward`
    // receives the output node's grad and must accumulate into the inputs'
    // grads via accumulate_grad.
    using CustomBackward = std::function<void(Tape&, const std::vector<int>& input_ids, const Matrix& out_grad)>;
    Tensor custom(std::string name, const std::vector<Tensor>& inputs, Matrix out_value,
                  CustomBackward backward);

    // Reverse sweep from a 1 x 1 loss node. May be called repeatedly;
    // leaf Variable grads accumulate.
    void backward(Tensor loss);

    // For custom-op backward rules.
    void accumulate_grad(int node_id, const Matrix& g);
    void accumulate_scaled_grad(int node_id, const Matrix& g, double scale);
    const Matrix& node_value(int node_id) const;
    bool node_tracked(int node_id) const;

    std::size_t node_count() const { return nodes_.size(); }

private:
    friend class Tensor;

    enum class Op {
        leaf, constant, matmul, add_rowvector_bias, elementwise_add, elementwise_mul,
        relu, sigmoid, exp, negate, square, scalar_mul, mean_all, sum_all,
        concat_cols, pairwise_sq_dist, logistic_noise_shift, custom
    };

    struct Node {
        Op op;
        Matrix owned;                    // value storage unless external
        const Matrix* external = nullptr;
        Variable* variable = nullptr;    // leaf target
        Matrix grad;                     // allocated on demand in backward
        bool tracked = false;
        int parent0 = -1;
        int parent1 = -1;
        double scalar = 0.0;             // scalar_mul factor / 1:tau
        Matrix aux;                      // op-specific retained data
        std::string custom_name;
        CustomBackward custom_backward;
        std::vector<int> custom_parents;

        const Matrix& value() const { return external ? *external : owned; }
    };

    int push(Node node, const char* op_name);
    Tensor make(int id) { return Tensor(this, id); }
    Node& at(Tensor t);
    const Node& at(Tensor t) const;
    void check_same_tape(Tensor t) const;
    Matrix& grad_buffer(int id);
    void backprop_node(int id);

    std::vector<Node> nodes_;
};

struct RmsPropState {
    double learning_rate = 0.01;
    double decay = 0.99;                  // running square-average coefficient
    double eps = 1e-8;
    std::vector<Matrix> square_avg;       // lazily sized to match params

    RmsPropState() = default;
    explicit RmsPropState(double lr, double decay_ = 0.99, double eps_ = 1e-8);
};

// s <- decay*s + (1-decay)*g^2 ; theta <- theta - lr * g / (sqrt(s) + eps).
// Grads are left untouched; callers zero them between steps.
void rmsprop_step(const std::vector<Variable*>& params, RmsPropState& state);

// Max over entries of |analytic - central difference| / max(1, |analytic|),
// with f evaluated at x +- step per entry.
double gradient_check(const std::function<Tensor(Tape&, Tensor)>& f, const Matrix& x, double step);

} // namespace shiftmmd
