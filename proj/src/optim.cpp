#include "oovrec/optim.hpp"

#include <cmath>

namespace oovrec {

OptKind opt_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptKind::sgd;
    if (s == "adam") return OptKind::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

const char* opt_kind_name(OptKind k) { return k == OptKind::sgd ? "sgd" : "adam"; }

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != grads.size()) throw ConfigError("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void adam_step(std::span<double> params, std::span<const double> grads, std::vector<double>& m,
               std::vector<double>& v, int64_t& step, double lr, const AdamParams& ap) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
        throw ConfigError("adam_step: shape mismatch");
    }
    ++step;
    const double bc1 = 1.0 - std::pow(ap.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(ap.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = ap.beta1 * m[i] + (1.0 - ap.beta1) * grads[i];
        v[i] = ap.beta2 * v[i] + (1.0 - ap.beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + ap.eps);
    }
}

Optimizer::Optimizer(OptKind kind, double lr, AdamParams ap) : kind_(kind), lr_(lr), adam_(ap) {}

void Optimizer::register_tensor(Tensor* t) {
    if (slot_of_.contains(t)) return;
    slot_of_[t] = tensors_.size();
    tensors_.push_back(t);
    OptimizerState::Slot slot;
    if (kind_ == OptKind::adam) {
        slot.m.assign(t->size(), 0.0);
        slot.v.assign(t->size(), 0.0);
    }
    state_.slots.push_back(std::move(slot));
}

void Optimizer::register_all(std::span<Tensor* const> ts) {
    for (Tensor* t : ts) register_tensor(t);
}

void Optimizer::step(Tensor* t) {
    auto it = slot_of_.find(t);
    if (it == slot_of_.end()) throw ConfigError("optimizer step on unregistered tensor " + t->name);
    if (kind_ == OptKind::sgd) {
        sgd_step(t->value, t->grad, lr_);
    } else {
        auto& slot = state_.slots[it->second];
        adam_step(t->value, t->grad, slot.m, slot.v, slot.step, lr_, adam_);
    }
}

void Optimizer::restore(const OptimizerState& snapshot) {
    if (snapshot.slots.size() != state_.slots.size()) {
        throw ConfigError("optimizer restore: snapshot has " +
                          std::to_string(snapshot.slots.size()) + " slots, expected " +
                          std::to_string(state_.slots.size()));
    }
    for (std::size_t i = 0; i < snapshot.slots.size(); ++i) {
        if (snapshot.slots[i].m.size() != state_.slots[i].m.size() ||
            snapshot.slots[i].v.size() != state_.slots[i].v.size()) {
            throw ConfigError("optimizer restore: slot shape mismatch for " + tensors_[i]->name);
        }
    }
    state_ = snapshot;
}

}  // namespace oovrec
