#include "fpdrl/critic/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fpdrl::critic {

std::vector<double> midpoint_fractions(std::size_t n) {
    if (n == 0) throw std::invalid_argument("quantile count must be >= 1");
    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i) tau[i] = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
    return tau;
}

QuantileEstimate QuantileEstimate::from_locations(std::vector<double> locations) {
    QuantileEstimate q;
    q.fractions = midpoint_fractions(locations.size());
    q.locations = std::move(locations);
    return q;
}

double QuantileEstimate::mean() const {
    return std::accumulate(locations.begin(), locations.end(), 0.0) / static_cast<double>(locations.size());
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw std::invalid_argument("wasserstein1: sizes " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ or are empty");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double huber(double delta, double kappa) {
    const double ad = std::fabs(delta);
    return ad <= kappa ? 0.5 * delta * delta : kappa * (ad - 0.5 * kappa);
}

double quantile_huber(double tau, double delta, double kappa) {
    return std::fabs(tau - (delta < 0.0 ? 1.0 : 0.0)) * huber(delta, kappa);
}

std::vector<double> project_quantiles(const std::vector<double>& atoms, const std::vector<double>& weights,
                                      std::size_t n) {
    if (atoms.size() != weights.size() || atoms.empty() || n == 0) {
        throw std::invalid_argument("project_quantiles: bad input sizes");
    }
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return atoms[x] < atoms[y]; });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

    std::vector<double> out(n, 0.0);
    const double bin = 1.0 / static_cast<double>(n);
    std::size_t i = 0;
    double lo = 0.0;  // left edge of the current atom's mass interval
    for (std::size_t k : order) {
        const double hi = lo + weights[k] / total;
        // Spread this atom's interval [lo, hi) across the bins it overlaps.
        while (i < n) {
            const double b_hi = (i + 1 == n) ? 1.0 : static_cast<double>(i + 1) * bin;
            const double b_lo = static_cast<double>(i) * bin;
            const double overlap = std::min(hi, b_hi) - std::max(lo, b_lo);
            if (overlap > 0.0) out[i] += overlap * atoms[k];
            if (hi < b_hi) break;
            ++i;
        }
        lo = hi;
    }
    for (double& v : out) v *= static_cast<double>(n);
    return out;
}

}  // namespace fpdrl::critic
