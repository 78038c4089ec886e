#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "irff/rng.hpp"
#include "irff/tensor.hpp"

namespace irff::testing {

/// Five-point central-difference check of d loss / d input.
///
/// A coordinate sits on or near a non-differentiable point (pooling tie,
/// relu at zero) when its one-sided slopes at `kink_step` disagree, or when
/// the wide stencil disagrees with the narrow one. Such coordinates are
/// counted as kinks instead of being compared.
struct GradCheckOptions {
    double step = 1e-4;
    double kink_step = 1e-6;
    double rel_tol = 1e-4;
    double tiny = 1e-6;  // below this magnitude compare absolutely
    double abs_tol = 1e-8;
    double kink_gap = 1e-3;
    double kink_floor = 1e-6;
    double stencil_gap = 1e-4;
    double stencil_floor = 1e-7;
    std::size_t max_coords_per_input = 24;
};

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t kinks = 0;
    std::size_t failures = 0;
    double worst_rel = 0;
    std::string worst;

    bool ok() const { return failures == 0 && checked > 0; }
};

inline double loss_value(const std::function<Tensor()>& fn) {
    NoGradGuard no_grad;
    return static_cast<double>(fn().item());
}

inline GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& inputs,
                                  std::uint64_t seed, const GradCheckOptions& opt = {},
                                  const std::vector<std::string>& names = {}) {
    for (auto t : inputs) t.zero_grad();
    backward(loss_fn());
    std::vector<std::vector<real>> analytic;
    for (const auto& t : inputs) {
        if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
        else analytic.emplace_back(t.numel(), real(0));
    }

    Rng rng(seed);
    GradCheckReport rep;
    const double f0 = loss_value(loss_fn);
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor t = inputs[ti];
        const std::size_t n = t.numel();
        std::vector<std::size_t> coords;
        if (n <= opt.max_coords_per_input) {
            for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (std::size_t i = 0; i < opt.max_coords_per_input; ++i) {
                coords.push_back(static_cast<std::size_t>(rng.integer(0, static_cast<long long>(n - 1))));
            }
        }
        for (auto c : coords) {
            auto data = t.mutable_data();
            const real orig = data[c];
            const double unit = std::max(1.0, std::abs(static_cast<double>(orig)));
            auto at = [&](double offset) {
                data[c] = static_cast<real>(orig + offset);
                const double f = loss_value(loss_fn);
                data[c] = orig;
                return f;
            };
            const double hk = opt.kink_step * unit;
            const double fr = at(hk), fl = at(-hk);
            const double right = (fr - f0) / hk;
            const double left = (f0 - fl) / hk;
            const double close = (fr - fl) / (2 * hk);

            const double h = opt.step * unit;
            const double f1 = at(h), fm1 = at(-h), f2 = at(2 * h), fm2 = at(-2 * h);
            const double numeric = (8 * (f1 - fm1) - (f2 - fm2)) / (12 * h);

            const bool one_sided_jump =
                std::abs(right - left) > opt.kink_gap * std::max(std::abs(right), std::abs(left)) + opt.kink_floor;
            const bool stencil_mismatch =
                std::abs(numeric - close) > opt.stencil_gap * std::abs(numeric) + opt.stencil_floor;
            if (one_sided_jump || stencil_mismatch) {
                ++rep.kinks;
                continue;
            }
            const double a = analytic[ti][c];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            ++rep.checked;
            bool bad;
            double err;
            if (scale < opt.tiny) {
                err = std::abs(a - numeric);
                bad = err > opt.abs_tol;
            } else {
                err = std::abs(a - numeric) / scale;
                bad = err > opt.rel_tol;
            }
            if (err > rep.worst_rel) {
                rep.worst_rel = err;
                char buf[128];
                std::snprintf(buf, sizeof buf, "[%zu] analytic=%.6e numeric=%.6e", c, a, numeric);
                rep.worst = (ti < names.size() ? names[ti] : "input " + std::to_string(ti)) + buf;
            }
            if (bad) ++rep.failures;
        }
    }
    return rep;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
    auto t = Tensor::zeros(std::move(shape), requires_grad);
    for (auto& v : t.mutable_data()) v = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

/// Fixed random weights for reducing an op's output to a scalar loss.
inline Tensor random_weights(const Shape& shape, Rng& rng) { return random_tensor(shape, rng, -1.0, 1.0, false); }

}  // namespace irff::testing
