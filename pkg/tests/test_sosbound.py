import numpy as np
import pytest

from conftest import vdp_cycle_average
from sosupo.polyalg import PolyMap, Polynomial, lie_derivative
from sosupo.sdp import solve
from sosupo.sosbound import (TOL_MATCH, Certificate, CertificateStatus, RelaxationError, RelaxationSpec,
                             build_relaxation, dump_certificate, extract_certificate, gram_polynomial,
                             load_certificate, parse_certificate, prune_basis, save_certificate,
                             scaled_gap, solve_bound, verify_certificate)
from sosupo.systems import builtin, builtin_observable

ENERGY = builtin_observable("vdp_energy")


def test_constant_observable_bound_is_the_constant(vdp, sprott):
    for system in (vdp, sprott):
        spec = RelaxationSpec(system, Polynomial.constant(system.n, 1.0), 2)
        cert = solve_bound(spec)
        assert cert.status == CertificateStatus.OPTIMAL
        assert cert.U == pytest.approx(1.0, abs=1e-6)
        assert cert.V.max_abs_coeff() < 1e-8


def test_relaxation_shape(vdp):
    spec = RelaxationSpec(vdp, ENERGY, 4)
    problem, decoding = build_relaxation(spec)
    # one free U plus one free coefficient per V monomial, one equality per monomial of D
    assert problem.n_free == 1 + len(spec.basis_V)
    assert problem.m == len({tuple(a + b for a, b in zip(p, q))
                             for p in spec.basis_sigma for q in spec.basis_sigma})
    assert len(spec.basis_V) == 14 and (0, 0) not in spec.basis_V
    assert spec.half_degree == 3 and len(spec.basis_sigma) == 10


def test_spec_errors(vdp, sprott):
    with pytest.raises(RelaxationError, match="even"):
        RelaxationSpec(vdp, ENERGY, 5)
    with pytest.raises(RelaxationError, match="below the observable degree"):
        RelaxationSpec(vdp, Polynomial.variable(2, 0) ** 4, 2)
    with pytest.raises(RelaxationError, match="SDPA"):
        RelaxationSpec(sprott, builtin_observable("sprott_phi1"), 14, basis_cap=100)


def test_vdp_degree16_bound_near_cycle_average(vdp_cert):
    avg = vdp_cycle_average(ENERGY)
    assert vdp_cert.ok
    assert 0.0 <= vdp_cert.U - avg <= 1e-3 * vdp_cert.U


def test_vdp_gap_small_on_cycle(vdp_cert, vdp, cycle):
    pts, _ = cycle
    D = vdp_cert.U - ENERGY - lie_derivative(vdp_cert.V, vdp.f)
    assert PolyMap([D])(pts)[:, 0].min() <= 1e-4


def test_vdp_certificate_nonnegative_on_box(vdp_cert, vdp):
    spec = RelaxationSpec(vdp, ENERGY, 16)
    rng = np.random.default_rng(0)
    report = verify_certificate(vdp_cert, spec, rng.uniform(-1, 1, (10_000, 2)))
    assert report["count_negative"] == 0 and report["valid"]


def test_verify_flags_negative_gap(vdp):
    phi = Polynomial.variable(2, 0) ** 2
    spec = RelaxationSpec(vdp, phi, 2)
    cert = Certificate(Polynomial.zero(2), 0.0, np.zeros((0, 0)), [], 2, (1.0, 1.0))
    X = np.random.default_rng(1).uniform(-1, 1, (500, 2))
    report = verify_certificate(cert, spec, X)
    assert report["min_D"] == pytest.approx(-np.max(X[:, 0] ** 2))
    assert report["count_negative"] > 0 and not report["valid"]
    empty = verify_certificate(cert, spec, [])
    assert empty["samples"] == 0 and empty["min_D"] == np.inf


def test_coefficient_matching_identity(vdp_cert, vdp):
    D = scaled_gap(vdp_cert, vdp, ENERGY)
    G = gram_polynomial(vdp_cert.gram, vdp_cert.basis)
    X = np.random.default_rng(2).uniform(-1, 1, (100, 2))
    err = np.abs(PolyMap([D])(X) - PolyMap([G])(X)).max()
    bound = 10 * max(vdp_cert.residuals["max_coeff_mismatch"], 1e-16) * len(vdp_cert.basis) ** 2
    assert err <= bound


def test_truncated_gram_is_numerical_trouble(vdp):
    spec = RelaxationSpec(vdp, ENERGY, 6)
    problem, decoding = build_relaxation(spec)
    sol = solve(problem)
    Q = sol.primal_blocks[decoding.gram_block]
    w, vecs = np.linalg.eigh(Q)
    w[0] = -1e-2
    sol.primal_blocks[decoding.gram_block] = (vecs * w) @ vecs.T
    cert = extract_certificate(problem, decoding, sol, spec)
    assert cert.status == CertificateStatus.NUMERICAL_TROUBLE


def test_bounds_monotone_in_degree(vdp):
    Us = [solve_bound(RelaxationSpec(vdp, ENERGY, d)).U for d in (2, 4, 6, 8)]
    for lo, hi in zip(Us[1:], Us):
        assert lo <= hi + 1e-6


def test_prune_keeps_the_bound(sprott):
    phi = builtin_observable("sprott_phi3")
    spec = RelaxationSpec(sprott, phi, 6)
    kept = prune_basis(spec)
    assert len(kept) < len(spec.basis_sigma)
    assert set(kept) <= set(spec.basis_sigma)
    full = solve_bound(spec)
    pruned = solve_bound(RelaxationSpec(sprott, phi, 6, basis_sigma=kept))
    assert pruned.ok
    assert pruned.U == pytest.approx(full.U, rel=1e-5)


def test_certificate_round_trip(vdp_cert, tmp_path):
    back = parse_certificate(dump_certificate(vdp_cert))
    assert back.U == vdp_cert.U and back.V == vdp_cert.V
    assert np.array_equal(back.gram, vdp_cert.gram)
    assert back.status == vdp_cert.status and back.basis == vdp_cert.basis
    path = tmp_path / "c.cert"
    save_certificate(vdp_cert, path)
    assert load_certificate(path).residuals == pytest.approx(vdp_cert.residuals, nan_ok=True)


def test_residual_tolerances_hold_for_returned_certificate(vdp_cert):
    assert vdp_cert.residuals["min_gram_eigenvalue"] >= -1e-7
    assert vdp_cert.residuals["max_coeff_mismatch"] <= TOL_MATCH
