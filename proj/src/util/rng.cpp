#include "fpdrl/util/rng.hpp"

#include <bit>
#include <sstream>
#include <stdexcept>

namespace fpdrl {

std::string Rng::serialize() const {
    std::ostringstream out;
    out << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << std::bit_cast<std::uint64_t>(spare_);
    return out.str();
}

void Rng::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    int spare_flag = 0;
    std::uint64_t spare_bits = 0;
    in >> engine_ >> spare_flag >> spare_bits;
    if (!in) throw std::runtime_error("corrupt rng state");
    has_spare_ = spare_flag != 0;
    spare_ = std::bit_cast<double>(spare_bits);
}

}  // namespace fpdrl
