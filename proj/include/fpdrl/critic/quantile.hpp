#pragma once

#include <cstddef>
#include <vector>

namespace fpdrl::critic {

/// tau_i = (2i - 1) / (2N), i = 1..N.
std::vector<double> midpoint_fractions(std::size_t n);

/// Uniform Dirac mixture over `locations` at the midpoint fractions.
struct QuantileEstimate {
    std::vector<double> locations;
    std::vector<double> fractions;

    static QuantileEstimate from_locations(std::vector<double> locations);
    /// The scalar Q estimate.
    double mean() const;
};

/// W1 between equal-size uniform quantile sets: (1/N) sum |A_(i) - B_(i)|
/// over sorted order. Throws std::invalid_argument on size mismatch.
double wasserstein1(std::vector<double> a, std::vector<double> b);

/// Huber loss with threshold kappa.
double huber(double delta, double kappa);

/// |tau - 1{delta < 0}| * huber(delta, kappa).
double quantile_huber(double tau, double delta, double kappa);

/// Projects a discrete distribution onto N uniform quantiles by averaging
/// the quantile function over each bin: theta_i = N * integral of F^-1 over
/// [(i-1)/N, i/N]. Preserves the mean and never increases W1.
std::vector<double> project_quantiles(const std::vector<double>& atoms, const std::vector<double>& weights,
                                      std::size_t n);

}  // namespace fpdrl::critic
