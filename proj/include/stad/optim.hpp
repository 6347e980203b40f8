#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stad/graph.hpp"
#include "stad/tensor.hpp"

namespace stad {

// Named parameters with matching gradient buffers. Iteration order is
// insertion order everywhere (optimizer updates, graph registration,
// serialization), which keeps runs reproducible.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
    };

    int add(const std::string& name, Tensor init);
    Entry& entry(int i) { return entries_[static_cast<size_t>(i)]; }
    const Entry& entry(int i) const { return entries_[static_cast<size_t>(i)]; }
    Entry* find(const std::string& name);
    const Entry* find(const std::string& name) const;
    int size() const { return static_cast<int>(entries_.size()); }
    void zero_grads();
    int64_t param_count() const;

private:
    std::vector<Entry> entries_;
};

// Registers every entry of the store as a graph parameter leaf, in store
// order. Pair with collect_grads after backward.
std::vector<Graph::Id> register_params(Graph& g, const ParamStore& store);
void collect_grads(const Graph& g, const std::vector<Graph::Id>& ids, ParamStore& store);

struct AdamConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 1e-5f;
};

// Adam with L2 weight decay folded into the gradient before the moment
// update (the classic coupled form).
class Adam {
public:
    Adam(AdamConfig cfg, std::span<ParamStore* const> stores);

    void step(std::span<ParamStore* const> stores);
    int64_t steps_taken() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t step_ = 0;
    std::vector<Tensor> m_, v_;  // flattened over (store, entry)
};

}  // namespace stad
