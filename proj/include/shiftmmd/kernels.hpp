#pragma once

#include <vector>

#include "shiftmmd/matrix.hpp"
#include "shiftmmd/tensor.hpp"

namespace shiftmmd {

// Mixture-of-RBF kernel: k(x, x') = sum_sigma exp(-||x - x'||^2 / (2 sigma^2)).
struct KernelSpec {
    std::vector<double> bandwidths{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
    // When true the listed values are taken as sigma^2 rather than sigma
    // (sensitivity flag; the default reading is sigma).
    bool bandwidths_are_variance = false;

    void validate() const;
    // 1 / (2 sigma^2) per mixture component.
    std::vector<double> exponents() const;
};

// Plain (non-differentiable) mixture Gram matrix; used by the KMM solver and
// anywhere gradients are not needed.
Matrix gram_mixture(const Matrix& a, const Matrix& b, const KernelSpec& spec);

// Differentiable mixture Gram as a fused tape op.
Tensor mixture_gram(Tape& tape, Tensor a, Tensor b, const KernelSpec& spec);

// Biased (V-statistic) squared MMD, diagonal terms included:
//   (1/n^2) sum k(x,x') + (1/m^2) sum k(y,y') - (2/nm) sum k(x,y).
Tensor mmd2_biased(Tape& tape, Tensor x, Tensor y, const KernelSpec& spec);

// Sum of per-layer squared MMDs (multi-layer matching).
Tensor mmd2_multilayer(Tape& tape, const std::vector<Tensor>& layers_x,
                       const std::vector<Tensor>& layers_y, const KernelSpec& spec);

// Joint variant: entrywise product of per-layer Gram matrices, then the same
// V-statistic combination.
Tensor mmd2_joint(Tape& tape, const std::vector<Tensor>& layers_x,
                  const std::vector<Tensor>& layers_y, const KernelSpec& spec);

// Convenience scalar versions for evaluation paths.
double mmd2_biased_value(const Matrix& x, const Matrix& y, const KernelSpec& spec);

} // namespace shiftmmd
