#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/diff/checkpoint.hpp"
#include "fpdrl/envs/env.hpp"

namespace fpdrl::train {

/// Fixed-capacity ring buffer; once full, each push overwrites the oldest entry.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim);

    /// Stores (s, a, r, s', terminal). Truncated transitions are stored as
    /// non-terminal so they bootstrap.
    void push(const envs::Transition& t);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t cursor() const { return cursor_; }

    /// Uniform indices over the filled region, with replacement.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
    critic::CriticBatch gather(const std::vector<std::size_t>& indices) const;
    critic::CriticBatch sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }

    void save(std::string_view prefix, diff::Checkpoint& ckpt) const;
    void load(std::string_view prefix, const diff::Checkpoint& ckpt);

    bool operator==(const ReplayBuffer&) const = default;

private:
    std::size_t capacity_, state_dim_, action_dim_;
    std::size_t size_ = 0, cursor_ = 0;
    std::vector<double> states_, actions_, rewards_, next_states_, terminals_;
};

}  // namespace fpdrl::train
