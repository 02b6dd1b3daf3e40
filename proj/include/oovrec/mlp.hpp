#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oovrec/common.hpp"

namespace oovrec {

// Small feed-forward net: affine layers with rectifier activations on the
// hidden layers and a linear output. Weights are He-initialized from the
// seed. Gradients accumulate into each Tensor's grad buffer.
class MicroMlp {
public:
    MicroMlp(std::vector<std::size_t> widths, uint64_t seed, const std::string& name = "mlp");

    const std::vector<std::size_t>& widths() const { return widths_; }
    std::size_t input_dim() const { return widths_.front(); }
    std::size_t output_dim() const { return widths_.back(); }
    std::size_t param_count() const;

    Vec forward(std::span<const double> x) const;

    // Forward pass keeping pre-activations for backward. acts[l] holds the
    // pre-activation of layer l; acts.back() is the network output.
    Vec forward(std::span<const double> x, std::vector<Vec>& acts) const;

    // Accumulates dL/dW, dL/db into the tensors' grad buffers given the
    // tape from forward. Returns dL/dx.
    Vec backward(std::span<const double> x, const std::vector<Vec>& acts,
                 std::span<const double> grad_out);

    std::vector<Tensor*> params();
    const std::vector<Tensor>& layers_w() const { return w_; }
    const std::vector<Tensor>& layers_b() const { return b_; }
    Tensor& weight(std::size_t l) { return w_[l]; }
    Tensor& bias(std::size_t l) { return b_[l]; }

private:
    std::vector<std::size_t> widths_;
    std::vector<Tensor> w_;  // layer l: widths[l+1] x widths[l], row-major
    std::vector<Tensor> b_;
};

}  // namespace oovrec
