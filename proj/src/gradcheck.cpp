#include "allnc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "allnc/errors.hpp"

namespace allnc {

namespace {

std::vector<ad::Var> bind(ad::Tape& tape, std::span<const Tensor> params) {
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    return vars;
}

double evaluate_frozen(const ScalarFn& f, std::span<const Tensor> params, const std::vector<Tensor>& stopped) {
    ad::Tape tape;
    tape.replay_stopped(&stopped);
    const auto vars = bind(tape, params);
    return f(tape, vars).value().item();
}

}  // namespace

double evaluate(const ScalarFn& f, std::span<const Tensor> params) {
    ad::Tape tape;
    const auto vars = bind(tape, params);
    return f(tape, vars).value().item();
}

std::vector<Tensor> analytic_gradients(const ScalarFn& f, std::span<const Tensor> params) {
    ad::Tape tape;
    const auto vars = bind(tape, params);
    ad::Var root = f(tape, vars);
    tape.backward(root);
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (const auto& v : vars) grads.push_back(v.grad());
    return grads;
}

GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> params, double step) {
    if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
    // Stop-gradient outputs are constants of the derivative, so the
    // perturbed evaluations replay their values from the unperturbed point.
    std::vector<Tensor> analytic;
    std::vector<Tensor> stopped;
    {
        ad::Tape tape;
        const auto vars = bind(tape, params);
        ad::Var root = f(tape, vars);
        tape.backward(root);
        for (const auto& v : vars) analytic.push_back(v.grad());
        stopped = tape.stopped_values();
    }
    std::vector<Tensor> probe(params.begin(), params.end());

    GradCheckResult result;
    for (std::size_t p = 0; p < probe.size(); ++p) {
        for (std::size_t i = 0; i < probe[p].size(); ++i) {
            const double saved = probe[p][i];
            probe[p][i] = saved + step;
            const double up = evaluate_frozen(f, probe, stopped);
            probe[p][i] = saved - step;
            const double down = evaluate_frozen(f, probe, stopped);
            probe[p][i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw EvaluationError("grad_check: non-finite value perturbing parameter " + std::to_string(p) +
                                      " index " + std::to_string(i));
            }
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
            if (err > result.max_rel_error || (p == 0 && i == 0)) {
                result.max_rel_error = err;
                result.worst_param = p;
                result.worst_index = i;
                result.worst_analytic = analytic[p][i];
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace allnc
