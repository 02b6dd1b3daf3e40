#include "oovrec/mlp.hpp"

#include <cmath>

namespace oovrec {

MicroMlp::MicroMlp(std::vector<std::size_t> widths, uint64_t seed, const std::string& name)
    : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("MicroMlp needs at least input and output widths");
    Rng rng(mix_seed(seed, name + "/init"));
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const std::size_t fan_in = widths_[l];
        const std::size_t fan_out = widths_[l + 1];
        Tensor w(name + "/w" + std::to_string(l), fan_in * fan_out);
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& v : w.value) v = rng.normal() * scale;
        w_.push_back(std::move(w));
        b_.emplace_back(name + "/b" + std::to_string(l), fan_out);
    }
}

std::size_t MicroMlp::param_count() const {
    std::size_t n = 0;
    for (const auto& t : w_) n += t.size();
    for (const auto& t : b_) n += t.size();
    return n;
}

Vec MicroMlp::forward(std::span<const double> x) const {
    std::vector<Vec> acts;
    return forward(x, acts);
}

Vec MicroMlp::forward(std::span<const double> x, std::vector<Vec>& acts) const {
    if (x.size() != widths_.front()) {
        throw ConfigError("MicroMlp forward: input width " + std::to_string(x.size()) +
                          " != " + std::to_string(widths_.front()));
    }
    acts.clear();
    Vec cur(x.begin(), x.end());
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const std::size_t in = widths_[l];
        const std::size_t out = widths_[l + 1];
        Vec pre(out);
        for (std::size_t r = 0; r < out; ++r) {
            double s = b_[l].value[r];
            const double* wrow = w_[l].value.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) s += wrow[c] * cur[c];
            pre[r] = s;
        }
        acts.push_back(pre);
        if (l + 1 < w_.size()) {
            for (double& v : pre) v = v > 0.0 ? v : 0.0;  // rectifier on hidden layers
        }
        cur = std::move(pre);
    }
    return cur;
}

Vec MicroMlp::backward(std::span<const double> x, const std::vector<Vec>& acts,
                       std::span<const double> grad_out) {
    if (acts.size() != w_.size()) throw ConfigError("MicroMlp backward: bad tape");
    if (grad_out.size() != widths_.back()) {
        throw ConfigError("MicroMlp backward: grad width mismatch");
    }

    Vec delta(grad_out.begin(), grad_out.end());  // dL/d(pre-activation of layer l)
    for (std::size_t li = w_.size(); li-- > 0;) {
        const std::size_t in = widths_[li];
        const std::size_t out = widths_[li + 1];

        // post-activation input that fed layer li
        Vec input(in);
        if (li == 0) {
            std::copy(x.begin(), x.end(), input.begin());
        } else {
            for (std::size_t c = 0; c < in; ++c) {
                const double pre = acts[li - 1][c];
                input[c] = pre > 0.0 ? pre : 0.0;
            }
        }

        for (std::size_t r = 0; r < out; ++r) {
            b_[li].grad[r] += delta[r];
            double* gw = w_[li].grad.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) gw[c] += delta[r] * input[c];
        }

        Vec prev(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
            const double* wrow = w_[li].value.data() + r * in;
            for (std::size_t c = 0; c < in; ++c) prev[c] += delta[r] * wrow[c];
        }
        if (li > 0) {
            // gate through the rectifier of the previous layer
            for (std::size_t c = 0; c < in; ++c) {
                if (acts[li - 1][c] <= 0.0) prev[c] = 0.0;
            }
        }
        delta = std::move(prev);
    }
    return delta;  // dL/dx
}

std::vector<Tensor*> MicroMlp::params() {
    std::vector<Tensor*> out;
    for (auto& t : w_) out.push_back(&t);
    for (auto& t : b_) out.push_back(&t);
    return out;
}

}  // namespace oovrec
