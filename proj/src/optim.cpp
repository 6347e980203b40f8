#include "stad/optim.hpp"

#include <cmath>

#include "stad/errors.hpp"

namespace stad {

int ParamStore::add(const std::string& name, Tensor init) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.shape());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size() - 1);
}

ParamStore::Entry* ParamStore::find(const std::string& name) {
    for (auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto& e : entries_) e.grad = Tensor(e.value.shape());
}

int64_t ParamStore::param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

std::vector<Graph::Id> register_params(Graph& g, const ParamStore& store) {
    std::vector<Graph::Id> ids;
    ids.reserve(static_cast<size_t>(store.size()));
    for (int i = 0; i < store.size(); ++i) ids.push_back(g.param(store.entry(i).value));
    return ids;
}

void collect_grads(const Graph& g, const std::vector<Graph::Id>& ids, ParamStore& store) {
    if (static_cast<int>(ids.size()) != store.size())
        throw ConfigError("collect_grads: id list does not match store");
    for (int i = 0; i < store.size(); ++i) store.entry(i).grad = g.grad(ids[static_cast<size_t>(i)]);
}

Adam::Adam(AdamConfig cfg, std::span<ParamStore* const> stores) : cfg_(cfg) {
    for (ParamStore* s : stores) {
        for (int i = 0; i < s->size(); ++i) {
            m_.push_back(Tensor(s->entry(i).value.shape()));
            v_.push_back(Tensor(s->entry(i).value.shape()));
        }
    }
}

void Adam::step(std::span<ParamStore* const> stores) {
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(step_));
    const float inv_bc1 = static_cast<float>(1.0 / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float b1 = cfg_.beta1, b2 = cfg_.beta2;
    const float lr = cfg_.lr, eps = cfg_.eps, wd = cfg_.weight_decay;

    size_t slot = 0;
    for (ParamStore* s : stores) {
        for (int i = 0; i < s->size(); ++i, ++slot) {
            if (slot >= m_.size()) throw ConfigError("adam: store layout changed");
            auto& e = s->entry(i);
            float* th = e.value.data();
            const float* gr = e.grad.data();
            float* mp = m_[slot].data();
            float* vp = v_[slot].data();
            const int64_t n = e.value.numel();
#pragma omp parallel for simd schedule(static)
            for (int64_t j = 0; j < n; ++j) {
                const float g = gr[j] + wd * th[j];
                mp[j] = b1 * mp[j] + (1.0f - b1) * g;
                vp[j] = b2 * vp[j] + (1.0f - b2) * g * g;
                const float mh = mp[j] * inv_bc1;
                const float vh = vp[j] * inv_bc2;
                th[j] -= lr * mh / (std::sqrt(vh) + eps);
            }
            require_finite(e.value, "parameters after adam step");
        }
    }
}

}  // namespace stad
