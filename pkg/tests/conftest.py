import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sosupo.polyalg import Polynomial
from sosupo.systems import DynamicalSystem, builtin, builtin_observable


def circle_system() -> DynamicalSystem:
    """da/dt = (-a2, a1): unit-speed rotation, every circle is a 2*pi orbit."""
    a1, a2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    return DynamicalSystem(2, (-1.0 * a2, a1), "circle", ((0.0, 0.0),))


def shell_gap() -> Polynomial:
    """(|a|^2 - 1)^2, which vanishes exactly on the unit circle."""
    a1, a2 = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    return (a1 * a1 + a2 * a2 - 1.0) ** 2


def vdp_cycle(samples: int = 4000, t_settle: float = 200.0):
    """The van der Pol cycle and its period, from backward-time integration.

    The cycle repels forward in time, so it attracts trajectories of the
    negated field; the state at t_settle lies on it to integration accuracy.
    """
    fm = builtin("vdp").field_map()
    back = lambda t, x: -fm(x)
    sol = solve_ivp(back, (0.0, t_settle), [0.3, 0.0], method="DOP853", rtol=1e-13, atol=1e-13,
                    dense_output=True)
    ts = np.linspace(t_settle - 10.0, t_settle, 60_001)
    X = sol.sol(ts).T
    up = np.nonzero((X[:-1, 1] < 0) & (X[1:, 1] >= 0))[0]
    # linear interpolation of the upward crossings of a2 = 0
    cross = ts[up] - X[up, 1] * (ts[up + 1] - ts[up]) / (X[up + 1, 1] - X[up, 1])
    period = float(np.mean(np.diff(cross)[-4:]))
    pts = sol.sol(t_settle - period * np.arange(samples) / samples).T
    return pts, period


_CYCLE = {}


def cached_cycle():
    if "c" not in _CYCLE:
        _CYCLE["c"] = vdp_cycle()
    return _CYCLE["c"]


def vdp_cycle_average(phi) -> float:
    """Cycle average of phi from equispaced samples of the integrated cycle.

    The periodic trapezoid rule converges exponentially for smooth loops.
    """
    from sosupo.polyalg import PolyMap

    pts, _ = cached_cycle()
    return float(PolyMap([phi])(pts)[:, 0].mean())


@pytest.fixture(scope="session")
def circle():
    return circle_system()


@pytest.fixture(scope="session")
def vdp():
    return builtin("vdp")


@pytest.fixture(scope="session")
def sprott():
    return builtin("sprott")


@pytest.fixture(scope="session")
def vdp_cert(vdp):
    from sosupo.sosbound import RelaxationSpec, solve_bound

    return solve_bound(RelaxationSpec(vdp, builtin_observable("vdp_energy"), 16))


@pytest.fixture(scope="session")
def vdp_gap(vdp, vdp_cert):
    from sosupo.gapmin import build_gap

    return build_gap(vdp_cert, vdp, builtin_observable("vdp_energy"))


@pytest.fixture(scope="session")
def cycle():
    return cached_cycle()


@pytest.fixture(scope="session")
def sprott_phi3_gap(sprott):
    from sosupo.gapmin import build_gap
    from sosupo.sosbound import RelaxationSpec, solve_bound

    phi = builtin_observable("sprott_phi3")
    return build_gap(solve_bound(RelaxationSpec(sprott, phi, 6)), sprott, phi)


@pytest.fixture(scope="session")
def sprott_controlled(sprott, sprott_phi3_gap):
    """Projected-controlled (k = 0.25) Sprott trajectory from the best D minimizer."""
    from sosupo.flow import ControlledField, integrate
    from sosupo.gapmin import attractor_box, minimize_multistart, uniform_starts

    rng = np.random.default_rng(0)
    lo, hi, _ = attractor_box(sprott, rng)
    cloud = minimize_multistart(sprott_phi3_gap, uniform_starts(lo, hi, 100, rng), eps=1e-8)
    cf = ControlledField(sprott, sprott_phi3_gap, 0.25, "projected")
    return cf, integrate(cf, cloud.best(), (0.0, 100.0))


# -- acceptance report ------------------------------------------------------
def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line, flush=True)
        request.config._acceptance_lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
