#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fpdrl/diff/params.hpp"

namespace fpdrl::diff {

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AdamState {
    std::vector<DenseArray> m;
    std::vector<DenseArray> v;
    std::int64_t t = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const ParamSet& params, double lr);
};

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Throws NonFiniteError naming the parameter if any gradient is NaN or inf.
void adam_step(ParamSet& params, AdamState& state);

}  // namespace fpdrl::diff
