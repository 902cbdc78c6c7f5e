#include "fpdrl/train/replay_buffer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fpdrl::train {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(const envs::Transition& t) {
    if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ || t.action.size() != action_dim_) {
        throw std::invalid_argument("replay buffer: transition dimensions do not match");
    }
    // Storage grows lazily up to capacity.
    if (size_ < capacity_ && cursor_ == size_) {
        states_.insert(states_.end(), t.state.begin(), t.state.end());
        actions_.insert(actions_.end(), t.action.begin(), t.action.end());
        rewards_.push_back(t.reward);
        next_states_.insert(next_states_.end(), t.next_state.begin(), t.next_state.end());
        terminals_.push_back(t.terminal ? 1.0 : 0.0);
    } else {
        std::copy(t.state.begin(), t.state.end(), states_.begin() + static_cast<long>(cursor_ * state_dim_));
        std::copy(t.action.begin(), t.action.end(), actions_.begin() + static_cast<long>(cursor_ * action_dim_));
        rewards_[cursor_] = t.reward;
        std::copy(t.next_state.begin(), t.next_state.end(),
                  next_states_.begin() + static_cast<long>(cursor_ * state_dim_));
        terminals_[cursor_] = t.terminal ? 1.0 : 0.0;
    }
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
    if (size_ == 0) throw std::logic_error("replay buffer: sampling from an empty buffer");
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.index(size_));
    return idx;
}

critic::CriticBatch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
    const std::size_t B = indices.size();
    critic::CriticBatch b{diff::DenseArray::matrix(B, state_dim_), diff::DenseArray::matrix(B, action_dim_),
                          diff::DenseArray::matrix(B, 1), diff::DenseArray::matrix(B, state_dim_),
                          diff::DenseArray::matrix(B, 1)};
    for (std::size_t r = 0; r < B; ++r) {
        const std::size_t i = indices[r];
        if (i >= size_) throw std::out_of_range("replay buffer: index " + std::to_string(i) + " beyond size");
        std::copy_n(states_.begin() + static_cast<long>(i * state_dim_), state_dim_, b.states.data() + r * state_dim_);
        std::copy_n(actions_.begin() + static_cast<long>(i * action_dim_), action_dim_,
                    b.actions.data() + r * action_dim_);
        b.rewards[r] = rewards_[i];
        std::copy_n(next_states_.begin() + static_cast<long>(i * state_dim_), state_dim_,
                    b.next_states.data() + r * state_dim_);
        b.terminals[r] = terminals_[i];
    }
    return b;
}

void ReplayBuffer::save(std::string_view prefix, diff::Checkpoint& ckpt) const {
    const std::string p(prefix);
    auto as_array = [](const std::vector<double>& v, std::size_t cols) {
        diff::DenseArray a = diff::DenseArray::matrix(cols == 0 ? 0 : v.size() / cols, cols);
        std::copy(v.begin(), v.end(), a.data());
        return a;
    };
    ckpt.put(p + "/states", as_array(states_, state_dim_));
    ckpt.put(p + "/actions", as_array(actions_, action_dim_));
    ckpt.put(p + "/rewards", as_array(rewards_, 1));
    ckpt.put(p + "/next_states", as_array(next_states_, state_dim_));
    ckpt.put(p + "/terminals", as_array(terminals_, 1));
    ckpt.meta[p + ".size"] = std::to_string(size_);
    ckpt.meta[p + ".cursor"] = std::to_string(cursor_);
    ckpt.meta[p + ".capacity"] = std::to_string(capacity_);
}

void ReplayBuffer::load(std::string_view prefix, const diff::Checkpoint& ckpt) {
    const std::string p(prefix);
    if (std::stoull(ckpt.meta_at(p + ".capacity")) != capacity_) {
        throw diff::CheckpointError("replay buffer capacity differs from the checkpoint");
    }
    auto as_vector = [&](const std::string& name, std::size_t cols) {
        const auto& a = ckpt.get(p + "/" + name);
        if (a.size() > 0 && a.cols() != cols) throw diff::CheckpointError("replay buffer field " + name + " has wrong width");
        return std::vector<double>(a.data(), a.data() + a.size());
    };
    states_ = as_vector("states", state_dim_);
    actions_ = as_vector("actions", action_dim_);
    rewards_ = as_vector("rewards", 1);
    next_states_ = as_vector("next_states", state_dim_);
    terminals_ = as_vector("terminals", 1);
    size_ = std::stoull(ckpt.meta_at(p + ".size"));
    cursor_ = std::stoull(ckpt.meta_at(p + ".cursor"));
    if (rewards_.size() != size_) throw diff::CheckpointError("replay buffer size does not match stored rows");
}

}  // namespace fpdrl::train
