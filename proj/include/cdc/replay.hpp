#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "cdc/rng.hpp"

namespace cdc {

using JointObs = std::vector<std::vector<double>>;
using JointActs = std::vector<std::vector<double>>;

struct Transition {
    JointObs obs;
    JointActs acts;
    double reward = 0.0;
    JointObs next_obs;
};

// FIFO ring buffer; minibatches sample uniformly with replacement.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 1000000) : capacity_(capacity) {
        if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }

    void push(Transition t) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(t));
        } else {
            data_[cursor_] = std::move(t);
            cursor_ = (cursor_ + 1) % capacity_;
        }
    }

    const Transition& at(std::size_t i) const { return data_[i]; }

    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
        std::vector<std::size_t> idx(batch);
        for (auto& i : idx) i = rng.index(data_.size());
        return idx;
    }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;  // oldest element once full
    std::vector<Transition> data_;
};

}  // namespace cdc
