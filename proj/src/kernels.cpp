#include "shiftmmd/kernels.hpp"

#include <cmath>
#include <utility>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

void KernelSpec::validate() const {
    if (bandwidths.empty()) throw ArgumentError("kernel spec needs at least one bandwidth");
    for (double s : bandwidths) {
        if (!(s > 0.0)) throw ArgumentError("kernel bandwidths must be strictly positive");
    }
}

std::vector<double> KernelSpec::exponents() const {
    validate();
    std::vector<double> e;
    e.reserve(bandwidths.size());
    for (double s : bandwidths) {
        double sigma_sq = bandwidths_are_variance ? s : s * s;
        e.push_back(1.0 / (2.0 * sigma_sq));
    }
    return e;
}

namespace {

Matrix squared_distances(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("gram: column mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    const int n = a.rows(), m = b.rows(), d = a.cols();
    Matrix dist = matmul_trans_b(a, b);
    std::vector<double> a_norm(n, 0.0), b_norm(m, 0.0);
    for (int i = 0; i < n; ++i) {
        const double* ai = a.row(i);
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += ai[j] * ai[j];
        a_norm[i] = s;
    }
    for (int i = 0; i < m; ++i) {
        const double* bi = b.row(i);
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += bi[j] * bi[j];
        b_norm[i] = s;
    }
    for (int i = 0; i < n; ++i) {
        double* di = dist.row(i);
        for (int j = 0; j < m; ++j) {
            double v = a_norm[i] + b_norm[j] - 2.0 * di[j];
            di[j] = v > 0.0 ? v : 0.0;
        }
    }
    return dist;
}

// True when each exponent is a quarter of the previous one, i.e. the
// bandwidths double (the standard {1,2,4,...} list). Each successive RBF term
// is then the previous term to the 1/4 power, so the whole mixture costs one
// exp and two sqrts per extra component instead of one exp each.
bool quartering_chain(const std::vector<double>& exps) {
    for (std::size_t k = 1; k < exps.size(); ++k) {
        if (std::fabs(exps[k] - 0.25 * exps[k - 1]) > 1e-12 * exps[k - 1]) return false;
    }
    return exps.size() > 1;
}

// G = sum_sigma exp(-e_sigma D); optionally also W = dG/dD (needed by the
// backward pass of the fused tape op).
void mixture_from_distances(const Matrix& dist, const std::vector<double>& exps,
                            Matrix& gram_out, Matrix* weight_out) {
    const std::size_t total = dist.size();
    gram_out = Matrix(dist.rows(), dist.cols());
    if (weight_out) *weight_out = Matrix(dist.rows(), dist.cols());
    const double* pd = dist.data();
    double* pg = gram_out.data();
    double* pw = weight_out ? weight_out->data() : nullptr;

    if (quartering_chain(exps)) {
        for (std::size_t i = 0; i < total; ++i) {
            double term = std::exp(-exps[0] * pd[i]);
            double g = term;
            double w = -exps[0] * term;
            for (std::size_t k = 1; k < exps.size(); ++k) {
                term = std::sqrt(std::sqrt(term));
                g += term;
                w -= exps[k] * term;
            }
            pg[i] = g;
            if (pw) pw[i] = w;
        }
    } else {
        for (std::size_t i = 0; i < total; ++i) {
            double g = 0.0, w = 0.0;
            for (double e : exps) {
                double term = std::exp(-e * pd[i]);
                g += term;
                w -= e * term;
            }
            pg[i] = g;
            if (pw) pw[i] = w;
        }
    }
}

} // namespace

Matrix gram_mixture(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
    const std::vector<double> exps = spec.exponents();
    Matrix dist = squared_distances(a, b);
    Matrix gram;
    mixture_from_distances(dist, exps, gram, nullptr);
    return gram;
}

Tensor mixture_gram(Tape& tape, Tensor a, Tensor b, const KernelSpec& spec) {
    const std::vector<double> exps = spec.exponents();
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    Matrix dist = squared_distances(av, bv);
    Matrix gram, weight;
    const bool tracked = a.requires_grad() || b.requires_grad();
    mixture_from_distances(dist, exps, gram, tracked ? &weight : nullptr);

    auto backward = [w = std::move(weight)](Tape& t, const std::vector<int>& in, const Matrix& g) {
        // dD = g .* W, then the pairwise-distance chain rule:
        //   dA = 2 (diag(rowsum dD) A - dD B), dB symmetric with dD^T.
        Matrix dd(g.rows(), g.cols());
        {
            const double* pg = g.data();
            const double* pw = w.data();
            double* po = dd.data();
            for (std::size_t i = 0; i < g.size(); ++i) po[i] = pg[i] * pw[i];
        }
        const Matrix& a_val = t.node_value(in[0]);
        const Matrix& b_val = t.node_value(in[1]);
        if (t.node_tracked(in[0])) {
            Matrix db = matmul(dd, b_val);
            std::vector<double> rs = row_sums(dd);
            Matrix acc(a_val.rows(), a_val.cols());
            for (int i = 0; i < a_val.rows(); ++i) {
                const double* ai = a_val.row(i);
                const double* dbi = db.row(i);
                double* oi = acc.row(i);
                for (int j = 0; j < a_val.cols(); ++j) oi[j] = 2.0 * (rs[i] * ai[j] - dbi[j]);
            }
            t.accumulate_grad(in[0], acc);
        }
        if (t.node_tracked(in[1])) {
            Matrix da = matmul_trans_a(dd, a_val);
            std::vector<double> cs = col_sums(dd);
            Matrix acc(b_val.rows(), b_val.cols());
            for (int i = 0; i < b_val.rows(); ++i) {
                const double* bi = b_val.row(i);
                const double* dai = da.row(i);
                double* oi = acc.row(i);
                for (int j = 0; j < b_val.cols(); ++j) oi[j] = 2.0 * (cs[i] * bi[j] - dai[j]);
            }
            t.accumulate_grad(in[1], acc);
        }
    };
    return tape.custom("mixture_gram", {a, b}, std::move(gram), std::move(backward));
}

Tensor mmd2_biased(Tape& tape, Tensor x, Tensor y, const KernelSpec& spec) {
    if (x.rows() < 1 || y.rows() < 1) throw ArgumentError("mmd2: empty sample set");
    Tensor gxx = mixture_gram(tape, x, x, spec);
    Tensor gyy = mixture_gram(tape, y, y, spec);
    Tensor gxy = mixture_gram(tape, x, y, spec);
    Tensor xx = tape.mean_all(gxx);
    Tensor yy = tape.mean_all(gyy);
    Tensor xy = tape.mean_all(gxy);
    return tape.add(tape.add(xx, yy), tape.scalar_mul(xy, -2.0));
}

Tensor mmd2_multilayer(Tape& tape, const std::vector<Tensor>& layers_x,
                       const std::vector<Tensor>& layers_y, const KernelSpec& spec) {
    if (layers_x.empty() || layers_x.size() != layers_y.size()) {
        throw ArgumentError("mmd2_multilayer: layer lists must be nonempty and equal length");
    }
    Tensor total = mmd2_biased(tape, layers_x[0], layers_y[0], spec);
    for (std::size_t l = 1; l < layers_x.size(); ++l) {
        total = tape.add(total, mmd2_biased(tape, layers_x[l], layers_y[l], spec));
    }
    return total;
}

Tensor mmd2_joint(Tape& tape, const std::vector<Tensor>& layers_x,
                  const std::vector<Tensor>& layers_y, const KernelSpec& spec) {
    if (layers_x.empty() || layers_x.size() != layers_y.size()) {
        throw ArgumentError("mmd2_joint: layer lists must be nonempty and equal length");
    }
    auto joint_gram = [&](const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
        Tensor g = mixture_gram(tape, a[0], b[0], spec);
        for (std::size_t l = 1; l < a.size(); ++l) {
            g = tape.mul(g, mixture_gram(tape, a[l], b[l], spec));
        }
        return g;
    };
    Tensor xx = tape.mean_all(joint_gram(layers_x, layers_x));
    Tensor yy = tape.mean_all(joint_gram(layers_y, layers_y));
    Tensor xy = tape.mean_all(joint_gram(layers_x, layers_y));
    return tape.add(tape.add(xx, yy), tape.scalar_mul(xy, -2.0));
}

double mmd2_biased_value(const Matrix& x, const Matrix& y, const KernelSpec& spec) {
    Tape tape;
    return mmd2_biased(tape, tape.constant_view(x), tape.constant_view(y), spec).value()(0, 0);
}

} // namespace shiftmmd
