#include "shiftmmd/tensor.hpp"

#include <cmath>
#include <utility>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

void zero_grad(const std::vector<Variable*>& params) {
    for (Variable* p : params) p->grad.fill(0.0);
}

const Matrix& Tensor::value() const { return tape_->at(*this).value(); }

const Matrix& Tensor::grad() const {
    const auto& node = tape_->at(*this);
    if (node.grad.empty()) {
        throw StateError("tensor has no gradient; call backward on a loss that reaches it");
    }
    return node.grad;
}

bool Tensor::requires_grad() const { return tape_->at(*this).tracked; }

Tape::Node& Tape::at(Tensor t) {
    check_same_tape(t);
    return nodes_[static_cast<std::size_t>(t.id_)];
}

const Tape::Node& Tape::at(Tensor t) const {
    check_same_tape(t);
    return nodes_[static_cast<std::size_t>(t.id_)];
}

void Tape::check_same_tape(Tensor t) const {
    if (t.tape_ != this || t.id_ < 0 || t.id_ >= static_cast<int>(nodes_.size())) {
        throw StateError("tensor does not belong to this tape");
    }
}

int Tape::push(Node node, const char* op_name) {
    if (!node.value().all_finite()) {
        throw NumericError(std::string("non-finite values produced by ") + op_name);
    }
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::constant(Matrix v) {
    Node n;
    n.op = Op::constant;
    n.owned = std::move(v);
    return make(push(std::move(n), "constant"));
}

Tensor Tape::constant_view(const Matrix& v) {
    Node n;
    n.op = Op::constant;
    n.external = &v;
    return make(push(std::move(n), "constant"));
}

Tensor Tape::leaf(Variable& v) {
    Node n;
    n.op = Op::leaf;
    n.external = &v.value;
    n.variable = &v;
    n.tracked = true;
    return make(push(std::move(n), "leaf"));
}

namespace {

Matrix map_unary(const Matrix& x, double (*fn)(double)) {
    Matrix out(x.rows(), x.cols());
    const double* src = x.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = fn(src[i]);
    return out;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Tensor Tape::matmul(Tensor a, Tensor b) {
    const Matrix& av = at(a).value();
    const Matrix& bv = at(b).value();
    Node n;
    n.op = Op::matmul;
    n.owned = shiftmmd::matmul(av, bv);
    n.parent0 = a.id_;
    n.parent1 = b.id_;
    n.tracked = at(a).tracked || at(b).tracked;
    return make(push(std::move(n), "matmul"));
}

Tensor Tape::add_rowvector_bias(Tensor x, Tensor bias) {
    const Matrix& xv = at(x).value();
    const Matrix& bv = at(bias).value();
    if (bv.rows() != 1 || bv.cols() != xv.cols()) {
        throw ShapeError("add_rowvector_bias: " + xv.shape_str() + " + " + bv.shape_str());
    }
    Matrix out(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i) {
        const double* xi = xv.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < xv.cols(); ++j) oi[j] = xi[j] + bv(0, j);
    }
    Node n;
    n.op = Op::add_rowvector_bias;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.parent1 = bias.id_;
    n.tracked = at(x).tracked || at(bias).tracked;
    return make(push(std::move(n), "add_rowvector_bias"));
}

Tensor Tape::add(Tensor a, Tensor b) {
    const Matrix& av = at(a).value();
    const Matrix& bv = at(b).value();
    if (!av.same_shape(bv)) {
        throw ShapeError("elementwise_add: " + av.shape_str() + " + " + bv.shape_str());
    }
    Matrix out = av;
    add_in_place(out, bv);
    Node n;
    n.op = Op::elementwise_add;
    n.owned = std::move(out);
    n.parent0 = a.id_;
    n.parent1 = b.id_;
    n.tracked = at(a).tracked || at(b).tracked;
    return make(push(std::move(n), "elementwise_add"));
}

Tensor Tape::mul(Tensor a, Tensor b) {
    const Matrix& av = at(a).value();
    const Matrix& bv = at(b).value();
    if (!av.same_shape(bv)) {
        throw ShapeError("elementwise_mul: " + av.shape_str() + " * " + bv.shape_str());
    }
    Matrix out(av.rows(), av.cols());
    const double* pa = av.data();
    const double* pb = bv.data();
    double* po = out.data();
    for (std::size_t i = 0; i < av.size(); ++i) po[i] = pa[i] * pb[i];
    Node n;
    n.op = Op::elementwise_mul;
    n.owned = std::move(out);
    n.parent0 = a.id_;
    n.parent1 = b.id_;
    n.tracked = at(a).tracked || at(b).tracked;
    return make(push(std::move(n), "elementwise_mul"));
}

Tensor Tape::relu(Tensor x) {
    const Matrix& xv = at(x).value();
    Matrix out(xv.rows(), xv.cols());
    const double* src = xv.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
    Node n;
    n.op = Op::relu;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "relu"));
}

Tensor Tape::sigmoid(Tensor x) {
    Node n;
    n.op = Op::sigmoid;
    n.owned = map_unary(at(x).value(), stable_sigmoid);
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "sigmoid"));
}

Tensor Tape::exp(Tensor x) {
    Node n;
    n.op = Op::exp;
    n.owned = map_unary(at(x).value(), [](double v) { return std::exp(v); });
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "exp"));
}

Tensor Tape::negate(Tensor x) {
    Node n;
    n.op = Op::negate;
    n.owned = map_unary(at(x).value(), [](double v) { return -v; });
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "negate"));
}

Tensor Tape::square(Tensor x) {
    Node n;
    n.op = Op::square;
    n.owned = map_unary(at(x).value(), [](double v) { return v * v; });
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "square"));
}

Tensor Tape::scalar_mul(Tensor x, double c) {
    const Matrix& xv = at(x).value();
    Matrix out(xv.rows(), xv.cols());
    const double* src = xv.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) dst[i] = c * src[i];
    Node n;
    n.op = Op::scalar_mul;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.scalar = c;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "scalar_mul"));
}

Tensor Tape::mean_all(Tensor x) {
    const Matrix& xv = at(x).value();
    if (xv.empty()) throw ArgumentError("mean_all of an empty matrix");
    Matrix out(1, 1);
    out(0, 0) = sum_all_entries(xv) / static_cast<double>(xv.size());
    Node n;
    n.op = Op::mean_all;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "mean_all"));
}

Tensor Tape::sum_all(Tensor x) {
    const Matrix& xv = at(x).value();
    Matrix out(1, 1);
    out(0, 0) = sum_all_entries(xv);
    Node n;
    n.op = Op::sum_all;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "sum_all"));
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
    const Matrix& av = at(a).value();
    const Matrix& bv = at(b).value();
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: " + av.shape_str() + " | " + bv.shape_str());
    }
    Matrix out(av.rows(), av.cols() + bv.cols());
    for (int i = 0; i < av.rows(); ++i) {
        double* oi = out.row(i);
        const double* ai = av.row(i);
        const double* bi = bv.row(i);
        for (int j = 0; j < av.cols(); ++j) oi[j] = ai[j];
        for (int j = 0; j < bv.cols(); ++j) oi[av.cols() + j] = bi[j];
    }
    Node n;
    n.op = Op::concat_cols;
    n.owned = std::move(out);
    n.parent0 = a.id_;
    n.parent1 = b.id_;
    n.tracked = at(a).tracked || at(b).tracked;
    return make(push(std::move(n), "concat_cols"));
}

Tensor Tape::pairwise_sq_dist(Tensor a, Tensor b) {
    const Matrix& av = at(a).value();
    const Matrix& bv = at(b).value();
    if (av.cols() != bv.cols()) {
        throw ShapeError("pairwise_sq_dist: " + av.shape_str() + " vs " + bv.shape_str());
    }
    const int n = av.rows(), m = bv.rows(), d = av.cols();
    Matrix out = matmul_trans_b(av, bv);
    std::vector<double> a_norm(n, 0.0), b_norm(m, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* ai = av.row(i);
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += ai[j] * ai[j];
        a_norm[i] = s;
    }
    for (int i = 0; i < m; ++i) {
        const double* bi = bv.row(i);
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += bi[j] * bi[j];
        b_norm[i] = s;
    }
    for (int i = 0; i < n; ++i) {
        double* oi = out.row(i);
        for (int j = 0; j < m; ++j) {
            // The expansion can go slightly negative from rounding; clamp so a
            // following exp never sees it.
            double dist = a_norm[i] + b_norm[j] - 2.0 * oi[j];
            oi[j] = dist > 0.0 ? dist : 0.0;
        }
    }
    Node n_node;
    n_node.op = Op::pairwise_sq_dist;
    n_node.owned = std::move(out);
    n_node.parent0 = a.id_;
    n_node.parent1 = b.id_;
    n_node.tracked = at(a).tracked || at(b).tracked;
    return make(push(std::move(n_node), "pairwise_sq_dist"));
}

// Saturation bound for the pre-sigmoid value: past this, sigmoid is 1.0 (or
// 0.0) to the last double bit, so clamping keeps the downstream sample
// strictly inside (0,1) without changing it numerically.
constexpr double kLogisticClamp = 36.7;

Tensor Tape::logistic_noise_shift(Tensor x, Matrix noise, double tau) {
    if (tau <= 0.0) throw ArgumentError("logistic_noise_shift: tau must be positive");
    const Matrix& xv = at(x).value();
    if (!xv.same_shape(noise)) {
        throw ShapeError("logistic_noise_shift: " + xv.shape_str() + " + noise " + noise.shape_str());
    }
    Matrix out(xv.rows(), xv.cols());
    const double* px = xv.data();
    const double* pn = noise.data();
    double* po = out.data();
    const double inv_tau = 1.0 / tau;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        double v = (px[i] + pn[i]) * inv_tau;
        if (v > kLogisticClamp) v = kLogisticClamp;
        else if (v < -kLogisticClamp) v = -kLogisticClamp;
        po[i] = v;
    }
    Node n;
    n.op = Op::logistic_noise_shift;
    n.owned = std::move(out);
    n.parent0 = x.id_;
    n.scalar = inv_tau;
    n.aux = std::move(noise);
    n.tracked = at(x).tracked;
    return make(push(std::move(n), "logistic_noise_shift"));
}

Tensor Tape::custom(std::string name, const std::vector<Tensor>& inputs, Matrix out_value,
                    CustomBackward backward) {
    Node n;
    n.op = Op::custom;
    n.owned = std::move(out_value);
    n.custom_name = std::move(name);
    n.custom_backward = std::move(backward);
    for (Tensor t : inputs) {
        check_same_tape(t);
        n.custom_parents.push_back(t.id_);
        if (nodes_[static_cast<std::size_t>(t.id_)].tracked) n.tracked = true;
    }
    const std::string op_name = n.custom_name;
    return make(push(std::move(n), op_name.c_str()));
}

Matrix& Tape::grad_buffer(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) {
        const Matrix& v = n.value();
        n.grad = Matrix(v.rows(), v.cols());
    }
    return n.grad;
}

void Tape::accumulate_grad(int node_id, const Matrix& g) {
    add_in_place(grad_buffer(node_id), g);
}

void Tape::accumulate_scaled_grad(int node_id, const Matrix& g, double scale) {
    add_scaled_in_place(grad_buffer(node_id), g, scale);
}

const Matrix& Tape::node_value(int node_id) const {
    return nodes_[static_cast<std::size_t>(node_id)].value();
}

bool Tape::node_tracked(int node_id) const {
    return nodes_[static_cast<std::size_t>(node_id)].tracked;
}

void Tape::backward(Tensor loss) {
    Node& root = at(loss);
    if (root.value().rows() != 1 || root.value().cols() != 1) {
        throw ShapeError("backward requires a 1x1 loss tensor, got " + root.value().shape_str());
    }
    grad_buffer(loss.id_)(0, 0) += 1.0;
    for (int id = loss.id_; id >= 0; --id) {
        backprop_node(id);
    }
}

void Tape::backprop_node(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.tracked || n.grad.empty()) return;
    const Matrix& g = n.grad;

    auto tracked_parent = [&](int pid) {
        return pid >= 0 && nodes_[static_cast<std::size_t>(pid)].tracked;
    };

    switch (n.op) {
    case Op::leaf: {
        Matrix& target = n.variable->grad;
        if (!target.same_shape(g)) {
            throw StateError("leaf gradient shape mismatch");
        }
        add_in_place(target, g);
        if (!target.all_finite()) {
            throw NumericError("non-finite gradient accumulated into a parameter");
        }
        break;
    }
    case Op::constant:
        break;
    case Op::matmul: {
        const Matrix& a = nodes_[static_cast<std::size_t>(n.parent0)].value();
        const Matrix& b = nodes_[static_cast<std::size_t>(n.parent1)].value();
        if (tracked_parent(n.parent0)) add_in_place(grad_buffer(n.parent0), matmul_trans_b(g, b));
        if (tracked_parent(n.parent1)) add_in_place(grad_buffer(n.parent1), matmul_trans_a(a, g));
        break;
    }
    case Op::add_rowvector_bias: {
        if (tracked_parent(n.parent0)) add_in_place(grad_buffer(n.parent0), g);
        if (tracked_parent(n.parent1)) {
            add_in_place(grad_buffer(n.parent1), Matrix::row_vector(col_sums(g)));
        }
        break;
    }
    case Op::elementwise_add: {
        if (tracked_parent(n.parent0)) add_in_place(grad_buffer(n.parent0), g);
        if (tracked_parent(n.parent1)) add_in_place(grad_buffer(n.parent1), g);
        break;
    }
    case Op::elementwise_mul: {
        const Matrix& a = nodes_[static_cast<std::size_t>(n.parent0)].value();
        const Matrix& b = nodes_[static_cast<std::size_t>(n.parent1)].value();
        if (tracked_parent(n.parent0)) {
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* pb = b.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) pd[i] += pg[i] * pb[i];
        }
        if (tracked_parent(n.parent1)) {
            Matrix& dst = grad_buffer(n.parent1);
            const double* pg = g.data();
            const double* pa = a.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) pd[i] += pg[i] * pa[i];
        }
        break;
    }
    case Op::relu: {
        if (tracked_parent(n.parent0)) {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parent0)].value();
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* px = x.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (px[i] > 0.0) pd[i] += pg[i];
            }
        }
        break;
    }
    case Op::sigmoid: {
        if (tracked_parent(n.parent0)) {
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* ps = n.owned.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) pd[i] += pg[i] * ps[i] * (1.0 - ps[i]);
        }
        break;
    }
    case Op::exp: {
        if (tracked_parent(n.parent0)) {
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* pe = n.owned.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) pd[i] += pg[i] * pe[i];
        }
        break;
    }
    case Op::negate: {
        if (tracked_parent(n.parent0)) add_scaled_in_place(grad_buffer(n.parent0), g, -1.0);
        break;
    }
    case Op::square: {
        if (tracked_parent(n.parent0)) {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parent0)].value();
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* px = x.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) pd[i] += 2.0 * pg[i] * px[i];
        }
        break;
    }
    case Op::scalar_mul: {
        if (tracked_parent(n.parent0)) add_scaled_in_place(grad_buffer(n.parent0), g, n.scalar);
        break;
    }
    case Op::mean_all: {
        if (tracked_parent(n.parent0)) {
            const Matrix& x = nodes_[static_cast<std::size_t>(n.parent0)].value();
            double per_entry = g(0, 0) / static_cast<double>(x.size());
            Matrix& dst = grad_buffer(n.parent0);
            double* pd = dst.data();
            for (std::size_t i = 0; i < dst.size(); ++i) pd[i] += per_entry;
        }
        break;
    }
    case Op::sum_all: {
        if (tracked_parent(n.parent0)) {
            double g0 = g(0, 0);
            Matrix& dst = grad_buffer(n.parent0);
            double* pd = dst.data();
            for (std::size_t i = 0; i < dst.size(); ++i) pd[i] += g0;
        }
        break;
    }
    case Op::concat_cols: {
        const Matrix& a = nodes_[static_cast<std::size_t>(n.parent0)].value();
        if (tracked_parent(n.parent0)) {
            Matrix& dst = grad_buffer(n.parent0);
            for (int i = 0; i < g.rows(); ++i) {
                const double* gi = g.row(i);
                double* di = dst.row(i);
                for (int j = 0; j < a.cols(); ++j) di[j] += gi[j];
            }
        }
        if (tracked_parent(n.parent1)) {
            Matrix& dst = grad_buffer(n.parent1);
            for (int i = 0; i < g.rows(); ++i) {
                const double* gi = g.row(i);
                double* di = dst.row(i);
                for (int j = 0; j < dst.cols(); ++j) di[j] += gi[a.cols() + j];
            }
        }
        break;
    }
    case Op::pairwise_sq_dist: {
        // dA = 2 (diag(rowsum g) A - g B), dB = 2 (diag(colsum g) B - g^T A).
        const Matrix& a = nodes_[static_cast<std::size_t>(n.parent0)].value();
        const Matrix& b = nodes_[static_cast<std::size_t>(n.parent1)].value();
        if (tracked_parent(n.parent0)) {
            Matrix gb = shiftmmd::matmul(g, b);
            std::vector<double> rs = row_sums(g);
            Matrix& dst = grad_buffer(n.parent0);
            for (int i = 0; i < a.rows(); ++i) {
                const double* ai = a.row(i);
                const double* gbi = gb.row(i);
                double* di = dst.row(i);
                for (int j = 0; j < a.cols(); ++j) di[j] += 2.0 * (rs[i] * ai[j] - gbi[j]);
            }
        }
        if (tracked_parent(n.parent1)) {
            Matrix gta = matmul_trans_a(g, a);
            std::vector<double> cs = col_sums(g);
            Matrix& dst = grad_buffer(n.parent1);
            for (int i = 0; i < b.rows(); ++i) {
                const double* bi = b.row(i);
                const double* gtai = gta.row(i);
                double* di = dst.row(i);
                for (int j = 0; j < b.cols(); ++j) di[j] += 2.0 * (cs[i] * bi[j] - gtai[j]);
            }
        }
        break;
    }
    case Op::logistic_noise_shift: {
        if (tracked_parent(n.parent0)) {
            Matrix& dst = grad_buffer(n.parent0);
            const double* pg = g.data();
            const double* po = n.owned.data();
            double* pd = dst.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (po[i] > -kLogisticClamp && po[i] < kLogisticClamp) {
                    pd[i] += n.scalar * pg[i];
                }
            }
        }
        break;
    }
    case Op::custom: {
        n.custom_backward(*this, n.custom_parents, g);
        break;
    }
    }
}

RmsPropState::RmsPropState(double lr, double decay_, double eps_)
    : learning_rate(lr), decay(decay_), eps(eps_) {}

void rmsprop_step(const std::vector<Variable*>& params, RmsPropState& state) {
    if (state.learning_rate <= 0.0) throw ArgumentError("rmsprop: learning rate must be positive");
    if (state.decay <= 0.0 || state.decay >= 1.0) throw ArgumentError("rmsprop: decay must be in (0, 1)");
    if (state.square_avg.empty()) {
        state.square_avg.reserve(params.size());
        for (const Variable* p : params) {
            state.square_avg.emplace_back(p->value.rows(), p->value.cols());
        }
    }
    if (state.square_avg.size() != params.size()) {
        throw StateError("rmsprop state does not match the parameter list");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        Variable& p = *params[k];
        Matrix& s = state.square_avg[k];
        if (!p.grad.same_shape(p.value) || p.grad.empty() != p.value.empty()) {
            throw StateError("rmsprop: parameter has no gradient");
        }
        double* pv = p.value.data();
        const double* pg = p.grad.data();
        double* ps = s.data();
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            ps[i] = state.decay * ps[i] + (1.0 - state.decay) * pg[i] * pg[i];
            pv[i] -= state.learning_rate * pg[i] / (std::sqrt(ps[i]) + state.eps);
        }
        if (!p.value.all_finite()) throw NumericError("rmsprop produced a non-finite parameter");
    }
}

double gradient_check(const std::function<Tensor(Tape&, Tensor)>& f, const Matrix& x, double step) {
    if (step <= 0.0) throw ArgumentError("gradient_check: step must be positive");

    Variable var(x);
    Matrix analytic;
    {
        Tape tape;
        Tensor loss = f(tape, tape.leaf(var));
        tape.backward(loss);
        analytic = var.grad;
    }

    auto eval = [&](const Matrix& point) {
        Tape tape;
        Tensor out = f(tape, tape.constant_view(point));
        return out.value()(0, 0);
    };

    Matrix probe = x;
    double worst = 0.0;
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = 0; j < x.cols(); ++j) {
            const double saved = probe(i, j);
            probe(i, j) = saved + step;
            double up = eval(probe);
            probe(i, j) = saved - step;
            double down = eval(probe);
            probe(i, j) = saved;
            double numeric = (up - down) / (2.0 * step);
            double a = analytic(i, j);
            double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
            if (err > worst) worst = err;
        }
    }
    return worst;
}

} // namespace shiftmmd
