#include "shiftmmd/kmm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shiftmmd/errors.hpp"

namespace shiftmmd {

double KmmConfig::effective_slack(int n) const {
    if (slack >= 0.0) return slack;
    const double root = std::sqrt(static_cast<double>(n));
    return (root - 1.0) / root;
}

std::vector<double> project_feasible(std::vector<double> beta, const KmmConfig& config) {
    const int n = static_cast<int>(beta.size());
    if (n == 0) throw ArgumentError("project_feasible: empty weight vector");
    const double b_max = config.upper_bound;
    if (!(b_max > 0.0)) throw ConfigError("kmm: upper bound must be positive");
    const double eps = config.effective_slack(n);
    if (eps < 0.0) throw ConfigError("kmm: slack must be nonnegative");
    const double lo_sum = n * (1.0 - eps);
    const double hi_sum = n * (1.0 + eps);
    if (b_max * n < lo_sum) {
        throw ConfigError("kmm: box bound " + std::to_string(b_max) +
                          " cannot reach the sum constraint");
    }

    auto clamp_all = [&] {
        for (double& b : beta) b = std::clamp(b, 0.0, b_max);
    };
    clamp_all();
    double sum = 0.0;
    for (double b : beta) sum += b;
    const double target = std::clamp(sum, lo_sum, hi_sum);
    if (target != sum) {
        const double shift = (target - sum) / n;
        for (double& b : beta) b += shift;
        clamp_all();
    }
    return beta;
}

double kmm_objective(const Matrix& gram, const std::vector<double>& kappa,
                     const std::vector<double>& beta) {
    const int n = static_cast<int>(beta.size());
    double quad = 0.0, lin = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = gram.row(i);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += row[j] * beta[static_cast<std::size_t>(j)];
        quad += beta[static_cast<std::size_t>(i)] * acc;
        lin += kappa[static_cast<std::size_t>(i)] * beta[static_cast<std::size_t>(i)];
    }
    return 0.5 * quad - lin;
}

KmmResult solve_kmm(const Matrix& x_train, const Matrix& x_test, const KmmConfig& config) {
    const int n = x_train.rows();
    const int m = x_test.rows();
    if (n < 1 || m < 1) throw ArgumentError("kmm: both sample sets must be nonempty");
    if (x_train.cols() != x_test.cols()) {
        throw ShapeError("kmm: column mismatch " + x_train.shape_str() + " vs " + x_test.shape_str());
    }

    const Matrix gram = gram_mixture(x_train, x_train, config.kernel);
    const Matrix cross = gram_mixture(x_train, x_test, config.kernel);
    std::vector<double> kappa(static_cast<std::size_t>(n), 0.0);
    const double scale = static_cast<double>(n) / static_cast<double>(m);
    for (int i = 0; i < n; ++i) {
        const double* row = cross.row(i);
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += row[j];
        kappa[static_cast<std::size_t>(i)] = scale * acc;
    }

    double step = config.step_size;
    if (step <= 0.0) {
        double max_row = 0.0;
        for (int i = 0; i < n; ++i) {
            const double* row = gram.row(i);
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += std::fabs(row[j]);
            max_row = std::max(max_row, acc);
        }
        step = 1.0 / max_row;
    }

    std::vector<double> beta(static_cast<std::size_t>(n), 1.0);
    beta = project_feasible(std::move(beta), config);
    double obj = kmm_objective(gram, kappa, beta);
    const double uniform_obj =
        kmm_objective(gram, kappa, std::vector<double>(static_cast<std::size_t>(n), 1.0));

    // Projected gradient with Nesterov momentum; the momentum resets whenever
    // an extrapolated step would raise the objective.
    std::vector<double> best = beta;
    double best_obj = obj;
    std::vector<double> extrapolated = beta;
    double momentum = 1.0;
    int rising = 0;
    int iter = 0;
    int stale = 0;
    std::vector<double> grad(static_cast<std::size_t>(n));
    std::vector<double> candidate(static_cast<std::size_t>(n));

    auto gradient_at = [&](const std::vector<double>& point) {
        for (int i = 0; i < n; ++i) {
            const double* row = gram.row(i);
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += row[j] * point[static_cast<std::size_t>(j)];
            grad[static_cast<std::size_t>(i)] = acc - kappa[static_cast<std::size_t>(i)];
        }
    };
    auto descend_from = [&](const std::vector<double>& point) {
        gradient_at(point);
        for (int i = 0; i < n; ++i) {
            candidate[static_cast<std::size_t>(i)] =
                point[static_cast<std::size_t>(i)] - step * grad[static_cast<std::size_t>(i)];
        }
        candidate = project_feasible(std::move(candidate), config);
        return kmm_objective(gram, kappa, candidate);
    };

    for (; iter < config.max_iters; ++iter) {
        double obj_candidate = descend_from(extrapolated);
        if (obj_candidate > obj) {
            momentum = 1.0;
            obj_candidate = descend_from(beta);
        }
        if (!std::isfinite(obj_candidate)) throw SolverError("kmm: objective became non-finite");
        rising = obj_candidate > obj ? rising + 1 : 0;
        if (rising >= 100) {
            throw SolverError("kmm diverged: objective rose for 100 consecutive iterations, last " +
                              std::to_string(obj_candidate));
        }

        const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        const double blend = (momentum - 1.0) / momentum_next;
        for (int i = 0; i < n; ++i) {
            extrapolated[static_cast<std::size_t>(i)] =
                candidate[static_cast<std::size_t>(i)] +
                blend * (candidate[static_cast<std::size_t>(i)] - beta[static_cast<std::size_t>(i)]);
        }
        momentum = momentum_next;
        beta = candidate;
        obj = obj_candidate;

        if (obj < best_obj - config.tolerance * std::max(1.0, std::fabs(best_obj))) {
            best_obj = obj;
            best = beta;
            stale = 0;
        } else {
            if (obj < best_obj) {
                best_obj = obj;
                best = beta;
            }
            if (++stale >= 200) break;
        }
    }

    KmmResult result;
    result.beta = std::move(best);
    result.objective = best_obj;
    result.uniform_objective = uniform_obj;
    result.iterations = iter;
    double sum = 0.0, box_violation = 0.0;
    for (double b : result.beta) {
        sum += b;
        box_violation = std::max({box_violation, -b, b - config.upper_bound});
    }
    result.sum = sum;
    const double eps = config.effective_slack(n);
    result.slab_violation = std::max(0.0, std::fabs(sum - n) - n * eps);
    return result;
}

} // namespace shiftmmd
