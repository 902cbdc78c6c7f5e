#pragma once

#include <string>
#include <vector>

namespace fpdrl::oracles {

/// Outcome of one oracle comparison.
struct Check {
    std::string name;
    double observed = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

inline Check make_check(std::string name, double observed, double tolerance, std::string detail = {}) {
    return Check{std::move(name), observed, tolerance, observed <= tolerance, std::move(detail)};
}

inline bool all_passed(const std::vector<Check>& checks) {
    for (const auto& c : checks) {
        if (!c.passed) return false;
    }
    return true;
}

}  // namespace fpdrl::oracles
