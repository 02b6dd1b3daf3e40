#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oovrec/common.hpp"

namespace oovrec {

enum class OptKind { sgd, adam };

OptKind opt_kind_from_string(const std::string& s);
const char* opt_kind_name(OptKind k);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

// Standard bias-corrected Adam update on one tensor's worth of parameters.
void adam_step(std::span<double> params, std::span<const double> grads, std::vector<double>& m,
               std::vector<double>& v, int64_t& step, double lr, const AdamParams& ap);

struct OptimizerState {
    struct Slot {
        std::vector<double> m, v;
        int64_t step = 0;
    };
    std::vector<Slot> slots;

    bool operator==(const OptimizerState&) const = default;
};

// Holds per-tensor moment accumulators. Tensors register once; updates can
// be routed to any subset of them, which is how phase-2 training touches
// only the OOV embedder parameters.
class Optimizer {
public:
    Optimizer(OptKind kind, double lr, AdamParams ap = {});

    void register_tensor(Tensor* t);
    void register_all(std::span<Tensor* const> ts);

    // Applies the update for t from t->grad, then leaves the grad in place
    // (callers zero grads when starting a new batch).
    void step(Tensor* t);

    OptimizerState checkpoint() const { return state_; }
    void restore(const OptimizerState& snapshot);

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    OptKind kind() const { return kind_; }

private:
    OptKind kind_;
    double lr_;
    AdamParams adam_;
    std::vector<Tensor*> tensors_;
    std::unordered_map<const Tensor*, std::size_t> slot_of_;
    OptimizerState state_;
};

}  // namespace oovrec
