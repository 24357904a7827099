"""The built-in identity suite: green on healthy code, red under mutations.

The mutation tests monkeypatch a deliberate sign or term error into one
operator and assert that exactly the check guarding that identity trips,
which is what makes the suite's green state meaningful.
"""

import numpy as np
import pytest

from heliflow import diagnostics, fields, kinematics, models, verify
from heliflow.verify import CheckResult

EXPECTED_NAMES = [
    "div_curl", "curl_grad", "integration_by_parts", "gradient_accuracy",
    "piola_divergence", "cofactor_cross_identity", "determinant_transport",
    "capillary_variational", "inertia_variational", "flux_identity",
    "helmholtz_forms", "momentum_forms", "sgn_recovery",
]


def by_name(results):
    return {r.name: r for r in results}


def test_spectral_suite_green():
    results = verify.verify(seed=0)
    assert [r.name for r in results] == EXPECTED_NAMES
    for r in results:
        assert r.passed, r.line()


def test_fd2_suite_green():
    results = verify.verify(seed=0, backend="fd2")
    assert [r.name for r in results] == EXPECTED_NAMES
    for r in results:
        assert r.passed, r.line()


def test_other_seed_green():
    assert all(r.passed for r in verify.verify(seed=5))


def test_invalid_backend():
    with pytest.raises(ValueError, match="backend"):
        verify.verify(seed=0, backend="fd8")


def test_deterministic_for_fixed_seed():
    a = verify.verify(seed=3)
    b = verify.verify(seed=3)
    for ra, rb in zip(a, b):
        assert ra.name == rb.name
        assert ra.measured == rb.measured      # bitwise-identical reruns


def test_result_line_format():
    res = CheckResult("sample", True, "requirement text",
                      {"value": 1.25e-3})
    assert res.line() == "PASS  sample: value=1.250e-03  [requirement text]"
    res = CheckResult("sample", False, "requirement text", {})
    assert res.line().startswith("FAIL")


# ---------------------------------------------------------------------------
# mutation sensitivity
# ---------------------------------------------------------------------------

def test_cofactor_sign_mutation_trips_cross_identity(monkeypatch):
    real = kinematics.scaled_cofactor

    def flipped(F):
        basis = real(F)
        return kinematics.ScaledCofactorBasis(tuple(
            fields.VectorField(E.grid, -E.values) for E in basis.E))

    monkeypatch.setattr(kinematics, "scaled_cofactor", flipped)
    results = by_name(verify.verify(seed=0))
    assert not results["cofactor_cross_identity"].passed
    assert results["div_curl"].passed
    assert results["helmholtz_forms"].passed


def test_dropped_gradient_energy_term_trips_variational(monkeypatch):
    def bulk_only(model, rho):
        vals = model.eos.e(rho.values) + rho.values * model.eos.de(rho.values)
        return fields.ScalarField(rho.grid, vals)

    monkeypatch.setattr(models, "capillary_delta_W", bulk_only)
    results = by_name(verify.verify(seed=0))
    assert not results["capillary_variational"].passed
    assert results["inertia_variational"].passed
    assert results["div_curl"].passed


def test_lie_transport_sign_mutation_trips_flux_identity(monkeypatch):
    def wrong_lie_d2(w, u, Dw_Dt):
        vals = Dw_Dt.values + w.values * fields.divergence(u).values \
            + fields.matvec(fields.jacobian(u), w).values
        return fields.VectorField(w.grid, vals)

    monkeypatch.setattr(diagnostics, "lie_d2", wrong_lie_d2)
    results = by_name(verify.verify(seed=0))
    assert not results["flux_identity"].passed
    assert results["integration_by_parts"].passed
    assert results["momentum_forms"].passed
