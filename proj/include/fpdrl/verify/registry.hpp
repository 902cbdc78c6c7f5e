#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fpdrl/oracles/suite.hpp"

namespace fpdrl::verify {

/// A named group of oracle checks run by `fpdrl verify`.
struct Suite {
    std::string name;
    std::string description;
    std::function<std::vector<oracles::Check>()> run;
};

/// Every oracle suite, in report order.
const std::vector<Suite>& suites();
std::vector<std::string> suite_names();
const Suite& find_suite(const std::string& name);

/// Finite-difference checks of the actor and temperature losses (d = 1, K = 2 flow).
std::vector<oracles::Check> train_gradient_checks(int seeds, double tolerance = 1e-3);

}  // namespace fpdrl::verify
