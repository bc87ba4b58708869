#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "attncodec/random.hpp"
#include "attncodec/tensor.hpp"

namespace attncodec::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double sd = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

using LossBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Normwise relative gradient error over all checked inputs,
/// ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf),
/// against central differences. Taken over the whole gradient so tensors whose
/// exact gradient is zero (a key bias under softmax) do not divide noise by noise.
/// Only inputs flagged in `check` are perturbed; the others stay constants.
inline double gradient_error(const std::vector<Tensor>& inputs, const LossBuilder& build, double h = 1e-5,
                             std::vector<bool> check = {}) {
    if (check.empty()) check.assign(inputs.size(), true);
    Graph g;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        vars.push_back(check[i] ? g.parameter(inputs[i]) : g.constant(inputs[i]));
    g.backward(build(g, vars));

    auto evaluate = [&](const std::vector<Tensor>& xs) {
        Graph ng;
        std::vector<Var> nv;
        for (const Tensor& x : xs) nv.push_back(ng.constant(x));
        return ng.value(build(ng, nv)).item();
    };

    double diff = 0.0, scale = 0.0;
    std::vector<Tensor> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!check[i]) continue;
        const Tensor& analytic = g.grad(vars[i]);
        for (std::size_t j = 0; j < inputs[i].size(); ++j) {
            const double x0 = work[i][j];
            work[i][j] = x0 + h;
            const double up = evaluate(work);
            work[i][j] = x0 - h;
            const double down = evaluate(work);
            work[i][j] = x0;
            const double numeric = (up - down) / (2.0 * h);
            diff = std::max(diff, std::abs(numeric - analytic[j]));
            scale = std::max({scale, std::abs(numeric), std::abs(analytic[j])});
        }
    }
    return scale > 0.0 ? diff / scale : 0.0;
}

/// Reduces any tensor to a scalar with fixed random weights, so every output
/// element carries a distinct gradient.
inline Var weighted_sum(Graph& g, Var out, std::uint64_t seed = 99) {
    Rng rng(seed);
    const Tensor& v = g.value(out);
    return ops::mean(g, ops::mul(g, out, g.constant(random_tensor(v.shape(), rng))));
}

}  // namespace attncodec::test
