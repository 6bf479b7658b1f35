#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "allnc/autodiff.hpp"

namespace allnc {

// Builds a scalar on the given tape from one leaf per parameter tensor.
using ScalarFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed(double tol) const { return max_rel_error < tol; }
};

/// Compares reverse-mode gradients against central differences.
///
/// Every coordinate of every parameter is perturbed by +/- step, with every
/// stop_gradient output held at its unperturbed value. The error
/// per coordinate is |analytic - numeric| / max(1, |numeric|) and the result
/// carries the worst one. Throws EvaluationError if f is non-finite at any
/// perturbed point.
GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params, double step = 1e-5);

// Reverse-mode gradients of f at params, one tensor per parameter.
std::vector<Tensor> analytic_gradients(const ScalarFn& f, std::span<const Tensor> params);

// Value of f at params without building gradient bookkeeping for the caller.
double evaluate(const ScalarFn& f, std::span<const Tensor> params);

}  // namespace allnc
