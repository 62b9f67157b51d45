#pragma once

#include <functional>
#include <string>

#include "scenetok/autograd.hpp"
#include "scenetok/param_store.hpp"

namespace scenetok {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_skipped = 0;  ///< non-smooth coordinates excluded from the comparison

    bool pass(double tol) const { return max_rel_err < tol; }
    std::string summary() const;
};

/// Central finite differences against the recorded-graph gradients.
/// `f` must rebuild the graph from `params` (via params.var) on every call
/// and return a scalar; a fresh graph epoch is started per call so nudged
/// tensor values are picked up. Relative error per coordinate is
/// |a - n| / max(1e-8, |a| + |n|); coordinates where both sides are below
/// 1e-7 count as matching, since central differences cannot resolve
/// gradients under the eps*|f|/h noise floor.
///
/// Coordinates where f is locally non-smooth (a max-pool argmax flipping
/// inside the nudge window) get special handling. A disagreeing coordinate is
/// first re-measured at h/2, which is unpolluted when the kink lies in the
/// outer shell of the wide window and strictly more accurate on smooth
/// stretches; a wrong analytic gradient disagrees with both measurements, so
/// genuine failures are never masked. If the narrow estimate still disagrees
/// and the one-sided slopes bracket the analytic value, the kink sits at the
/// point itself, any bracketed slope is a valid subgradient, and the
/// coordinate is counted as skipped rather than failed.
///
/// `analytic_offset` shifts every analytic gradient before comparison; it
/// exists solely for fault-injection self-tests and must stay 0 otherwise.
GradCheckReport grad_check(ParamStore& params, const std::function<Var()>& f, double h = 1e-4,
                           double analytic_offset = 0.0);

}  // namespace scenetok
