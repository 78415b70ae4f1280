import math

import numpy as np
import pytest

from blowuplab.errors import ConfigError, DomainError
from blowuplab.extrapolation import log_slope_limit
from blowuplab.karamata import (
    BlowupProfile,
    WeightKernel,
    cap_ceiling,
    const_kernel,
    constant_weight,
    effective_absorption,
    effective_index,
    index_gate_bound,
    kernel_primitive,
    kernel_primitive_inverse,
    limit_estimate,
    make_kernel,
    power_kernel,
    profile_decay_ratio,
    profile_inverse,
    profile_value,
    validated_weight,
)
from blowuplab.nonlinearity import power, power_log, rv_index_estimate

ROOT6 = math.sqrt(6.0)
# closed form for f = u^4, p = 3: phi(t) = (10/3)^(1/2) (3/2)^(3/2) t^(-3/2)
QUARTIC_CONST = math.sqrt(10.0 / 3.0) * 1.5 ** 1.5


def test_kernel_primitives():
    assert kernel_primitive(const_kernel(), 0.4) == pytest.approx(0.4)
    assert kernel_primitive(power_kernel(1.0), 0.4) == pytest.approx(0.08)  # s^2/2
    assert kernel_primitive(power_kernel(-0.5), 0.25) == pytest.approx(1.0)  # 2 sqrt(s)


def test_kernel_primitive_respects_finite_support():
    k = power_kernel(1.0, support=2.0)
    with pytest.raises(DomainError):
        kernel_primitive(k, 2.5)
    with pytest.raises(DomainError):
        kernel_primitive(k, 0.0)


def test_kernel_primitive_inverse_round_trip():
    for k in (const_kernel(), power_kernel(1.0), power_kernel(-0.5)):
        for s in (0.01, 0.4, 1.7):
            y = kernel_primitive(k, s)
            assert kernel_primitive_inverse(k, y) == pytest.approx(s, rel=1e-12)


def test_limit_estimates():
    assert limit_estimate(const_kernel()).value == pytest.approx(1.0, abs=1e-3)
    assert limit_estimate(power_kernel(1.0)).value == pytest.approx(0.5, abs=1e-3)
    assert limit_estimate(power_kernel(-0.5)).value == pytest.approx(2.0, abs=1e-3)


def test_kernel_class_invariants():
    with pytest.raises(ConfigError):
        WeightKernel(name="bad", func=lambda s: s, monotonicity="non-decreasing",
                     limit=1.5, support=2.0)
    with pytest.raises(ConfigError):
        WeightKernel(name="bad", func=lambda s: 1 / s, monotonicity="non-increasing",
                     limit=0.5, support=2.0)
    with pytest.raises(ConfigError):
        power_kernel(-1.5)


def test_kernel_registry():
    assert make_kernel("const").name == "const"
    assert make_kernel("power(1)").limit == pytest.approx(0.5)
    assert make_kernel("power(0)").monotonicity == "constant"
    with pytest.raises(ConfigError, match="unknown kernel"):
        make_kernel("cubic")


def test_profile_quadratic_closed_form():
    nl = power(2)
    assert profile_value(nl, 2.0, 1.0) == pytest.approx(6.0, rel=1e-10)
    assert profile_value(nl, 2.0, 2.0) == pytest.approx(1.5, rel=1e-10)


def test_profile_quartic_closed_form():
    assert profile_value(power(4), 3.0, 1.0) == pytest.approx(QUARTIC_CONST, rel=1e-10)


def test_profile_quadrature_path_matches_closed_form():
    # strip the closed-form primitive so the tail is integrated numerically
    nl = power(2)
    bare = nl.__class__(name="quad-path", index=2.0, func=nl.func, deriv=nl.deriv,
                        primitive_closed=nl.primitive_closed, primitive_power=None)
    prof = BlowupProfile(bare, 2.0)
    for t in (1e-3, 0.1, 1.0, 10.0):
        assert prof.value(t) == pytest.approx(6.0 / t ** 2, rel=1e-6)
    assert prof.tail_time(6.0) == pytest.approx(1.0, rel=1e-9)


def test_profile_inverse_and_round_trip():
    nl = power(2)
    assert profile_inverse(nl, 2.0, 6.0) == pytest.approx(1.0, rel=1e-10)
    assert profile_inverse(nl, 2.0, 1.5) == pytest.approx(2.0, rel=1e-10)
    for t in (0.1, 1.0, 10.0):
        assert profile_inverse(nl, 2.0, profile_value(nl, 2.0, t)) == pytest.approx(t, rel=1e-8)


def test_profile_ode_residual():
    prof = BlowupProfile(power(2), 2.0)
    for t in (0.3, 1.0, 3.0):
        assert prof.ode_residual(t) < 1e-6


def test_profile_rejects_bad_arguments():
    with pytest.raises(DomainError):
        profile_value(power(2), 2.0, -1.0)
    with pytest.raises(ConfigError):
        BlowupProfile(power(0.5), 2.0)  # tail not integrable


def test_profile_local_index_at_zero():
    # phi has local index 1 - r at 0+
    for nl, p in ((power(2), 2.0), (power(4), 3.0)):
        r = (nl.index + 1.0) / (nl.index + 1.0 - p)
        lim = log_slope_limit(lambda t: profile_value(nl, p, t), 1e-2, toward="zero", rungs=10)
        assert lim.value == pytest.approx(1.0 - r, rel=0.02)


def test_kernel_local_indices_at_zero():
    for k in (const_kernel(), power_kernel(1.0), power_kernel(-0.5)):
        ell = k.limit
        limK = log_slope_limit(lambda s: kernel_primitive(k, s), 1e-2, toward="zero", rungs=10)
        assert limK.value == pytest.approx(1.0 / ell, abs=0.02 / ell)
        limk = log_slope_limit(lambda s: float(k.func(s)) + 0.0, 1e-2, toward="zero", rungs=10)
        assert limk.value == pytest.approx((1.0 - ell) / ell, abs=0.03)


def test_slowly_varying_factor_has_index_zero():
    est = rv_index_estimate(lambda u: np.log1p(u), 2.0, np.geomspace(1e2, 1e8, 21))
    assert est == pytest.approx(0.0, abs=1e-2)


def test_effective_absorption_constant_kernel_is_identity():
    nl = power(2)
    assert effective_absorption(nl, const_kernel(), 2.0, 3.0) == pytest.approx(9.0, rel=1e-10)


def test_effective_absorption_linear_kernel_closed_form():
    # K^{-1}(y) = sqrt(2y), phi^{-1}(s) = sqrt(6/s); composition gives 2*sqrt(6)*s^{3/2}
    nl, k = power(2), power_kernel(1.0)
    assert effective_absorption(nl, k, 2.0, 1.0) == pytest.approx(2 * ROOT6, rel=1e-9)
    assert effective_absorption(nl, k, 2.0, 4.0) == pytest.approx(2 * ROOT6 * 8.0, rel=1e-9)


def test_effective_absorption_propagates_domain_errors():
    # with an explicitly finite kernel support the composition runs out of range
    nl, k = power(2), power_kernel(1.0, support=2.0)
    with pytest.raises(DomainError):
        effective_absorption(nl, k, 2.0, 1.0)  # needs K^{-1}(sqrt 6) = 2.21 > 2


def test_effective_index_values():
    assert effective_index(2.0, 2.0, 1.0) == pytest.approx(2.0)
    assert effective_index(2.0, 2.0, 0.5) == pytest.approx(1.5)
    assert effective_index(4.0, 3.0, 1.0) == pytest.approx(4.0)


def test_effective_index_gate():
    # p = 4, ell = 1: bound is max{1, 3, 3} = 3 and rho = 2 fails it
    assert index_gate_bound(2.0, 4.0, 1.0) == pytest.approx(3.0)
    with pytest.raises(ConfigError, match="index gate"):
        effective_index(2.0, 4.0, 1.0)


def test_effective_absorption_measured_index_matches_q():
    suite = [(power(2), 2.0, const_kernel()), (power(2), 2.0, power_kernel(1.0)),
             (power(4), 3.0, const_kernel())]
    for nl, p, k in suite:
        q = effective_index(nl.index, p, k.limit)
        est = rv_index_estimate(lambda s: effective_absorption(nl, k, p, s), 2.0,
                                np.geomspace(10.0, 1e7, 16))
        assert est == pytest.approx(q, abs=1e-2)


def test_decay_ratio_example_values():
    # f = u^2, p = 2, k = 1: ratio = phi(s)^{-1/2} = s / sqrt(6)
    ev = profile_decay_ratio(const_kernel(), power(2), 2.0, 0.5, np.array([0.1, 0.01]))
    np.testing.assert_allclose(ev.ratios, [0.1 / ROOT6, 0.01 / ROOT6], rtol=1e-9)
    assert ev.decreasing


def test_decay_ratio_window_enforced():
    # admissible window for f = u^2, p = 2, k = 1 is (0, 1)
    with pytest.raises(ConfigError, match="window"):
        profile_decay_ratio(const_kernel(), power(2), 2.0, 1.5, np.array([0.1, 0.01]))


def test_weight_envelope_validation():
    k = const_kernel()
    w = validated_weight(k, beta=lambda x, t: 1.0 + 0.1 * np.sin(x),
                         alpha1=lambda t: 0.9, alpha2=lambda t: 1.1,
                         x_samples=np.linspace(0, 1, 11), t_samples=[0.0, 0.2])
    assert w.values(np.array([0.5]), np.array([0.5]), 0.0, 2.0)[0] == pytest.approx(1.0 + 0.1 * math.sin(0.5))
    with pytest.raises(ConfigError, match="envelope"):
        validated_weight(k, beta=lambda x, t: 2.0 + 0 * x,
                         alpha1=lambda t: 0.9, alpha2=lambda t: 1.1,
                         x_samples=np.linspace(0, 1, 5), t_samples=[0.0])


def test_constant_weight():
    w = constant_weight(power_kernel(1.0), 4.0)
    # b = 4 * d^2 at p = 2
    np.testing.assert_allclose(w.values(np.array([0.3]), np.array([0.25]), 0.0, 2.0), [0.25])
    with pytest.raises(ConfigError):
        constant_weight(const_kernel(), -1.0)


def test_cap_ceiling_scales_with_margin():
    nl = power(2)
    d = np.array([1e-3, 1e-2, 0.1])
    lo = cap_ceiling(nl, 2.0, const_kernel(), 1.0, d, d, margin=1.0)
    hi = cap_ceiling(nl, 2.0, const_kernel(), 1.0, d, d, margin=8.0)
    assert hi == pytest.approx(8.0 * lo)
    # dominated by the finest cell: phi(1e-3) = 6e6
    assert lo == pytest.approx(6e6, rel=1e-6)
