#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dscg/numcore/tape.hpp"

namespace dscg {

using ParamSet = std::map<std::string, Tensor>;

/// Builds a scalar objective on the given tape. Must register every entry of
/// the ParamSet with Tape::param under its key.
using TapeObjective = std::function<Var(Tape&, const ParamSet&)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor for the relative error, so gradients that vanish up
    /// to round-off are compared on an absolute scale.
    double abs_floor = 1e-7;
};

struct CoordinateCheck {
    std::string param;
    std::size_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

struct GradCheckReport {
    std::size_t checked = 0;
    double max_rel_error = 0;
    CoordinateCheck worst;
    std::vector<CoordinateCheck> failures;
    /// Coordinates whose +-step perturbation changed a branch (ReLU side,
    /// argmin choice, norm guard); central differences are meaningless there.
    std::vector<CoordinateCheck> skipped;
    bool passed() const { return failures.empty() && checked > 0; }
};

namespace detail {

struct Evaluated {
    double value;
    std::vector<std::uint8_t> branches;
};

inline Evaluated evaluate(const TapeObjective& f, const ParamSet& params) {
    Tape tape;
    Var loss = f(tape, params);
    const double v = loss.value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective is not finite");
    return {v, tape.branches()};
}

} // namespace detail

/// Compares reverse-mode gradients with central finite differences on every
/// coordinate of every parameter.
inline GradCheckReport grad_check(const TapeObjective& f, ParamSet params, const GradCheckOptions& opt = {}) {
    GradientMap analytic;
    std::vector<std::uint8_t> base_branches;
    {
        Tape tape;
        Var loss = f(tape, params);
        if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: objective is not finite");
        base_branches = tape.branches();
        analytic = tape.backward(loss);
    }

    GradCheckReport report;
    for (auto& [name, tensor] : params) {
        const auto it = analytic.find(name);
        if (it == analytic.end()) throw ContractError("grad_check: objective did not register '" + name + "'");
        auto data = tensor.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + opt.step;
            const auto plus = detail::evaluate(f, params);
            data[i] = orig - opt.step;
            const auto minus = detail::evaluate(f, params);
            data[i] = orig;

            CoordinateCheck c;
            c.param = name;
            c.index = i;
            c.analytic = it->second[i];
            c.numeric = (plus.value - minus.value) / (2.0 * opt.step);
            const double denom = std::max({std::abs(c.analytic), std::abs(c.numeric), opt.abs_floor});
            c.rel_error = std::abs(c.analytic - c.numeric) / denom;

            if (plus.branches != base_branches || minus.branches != base_branches) {
                report.skipped.push_back(c);
                continue;
            }
            ++report.checked;
            if (report.checked == 1 || c.rel_error > report.max_rel_error) {
                report.max_rel_error = c.rel_error;
                report.worst = c;
            }
            if (c.rel_error > opt.tolerance) report.failures.push_back(c);
        }
    }
    return report;
}

} // namespace dscg
