#pragma once

#include <vector>

#include "shiftmmd/kernels.hpp"
#include "shiftmmd/matrix.hpp"

namespace shiftmmd {

// Kernel mean matching: weights beta minimizing 1/2 b^T K b - kappa^T b over
// the box [0, B] and the sum slab |sum(b) - n| <= n*eps, solved by projected
// gradient descent.
struct KmmConfig {
    KernelSpec kernel;
    double upper_bound = 1000.0;
    double slack = -1.0;        // < 0 selects the default (sqrt(n)-1)/sqrt(n)
    int max_iters = 5000;
    double step_size = 0.0;     // <= 0 selects 1 / max row abs sum of K
    double tolerance = 1e-6;

    double effective_slack(int n) const;
};

// Clamp to the box, shift uniformly into the sum slab, clamp once more.
std::vector<double> project_feasible(std::vector<double> beta, const KmmConfig& config);

struct KmmResult {
    std::vector<double> beta;
    double objective = 0.0;
    double uniform_objective = 0.0;
    int iterations = 0;
    double sum = 0.0;
    double box_violation = 0.0;
    double slab_violation = 0.0;
};

KmmResult solve_kmm(const Matrix& x_train, const Matrix& x_test, const KmmConfig& config);

double kmm_objective(const Matrix& gram, const std::vector<double>& kappa,
                     const std::vector<double>& beta);

} // namespace shiftmmd
