"""Benchmark polynomial systems, observables, and the system-file format.

System file layout::

    # optional comments
    n=3
    name=sprott
    f1:
    1 0 1 0        # coefficient then exponents
    1 0 0 1
    f2:
    ...
    equilibrium: -2 -4 4
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .polyalg import DimensionError, PolyMap, Polynomial, PolyParseError

EQUILIBRIUM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DynamicalSystem:
    n: int
    f: tuple
    name: str = "system"
    known_equilibria: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(self.f))
        if len(self.f) != self.n or any(fi.n != self.n for fi in self.f):
            raise DimensionError(f"vector field must have {self.n} components in {self.n} variables")
        object.__setattr__(
            self, "known_equilibria", tuple(np.asarray(e, dtype=float) for e in self.known_equilibria)
        )

    @property
    def degree(self) -> int:
        return max(fi.degree for fi in self.f)

    def field_map(self) -> PolyMap:
        pm = self.__dict__.get("_field_map")
        if pm is None:
            pm = PolyMap(self.f)
            object.__setattr__(self, "_field_map", pm)
        return pm

    def __call__(self, x) -> np.ndarray:
        return self.field_map()(x)

    def jacobian_polys(self) -> list[list[Polynomial]]:
        return [fi.gradient() for fi in self.f]

    def __eq__(self, other):
        if not isinstance(other, DynamicalSystem):
            return NotImplemented
        return (
            self.n == other.n
            and all(a == b for a, b in zip(self.f, other.f))
            and len(self.known_equilibria) == len(other.known_equilibria)
            and all(np.array_equal(a, b) for a, b in zip(self.known_equilibria, other.known_equilibria))
        )

    __hash__ = object.__hash__


def _var(n, i):
    return Polynomial.variable(n, i)


def van_der_pol(omega: float = 3.0) -> DynamicalSystem:
    """Reverse-time, rescaled van der Pol oscillator with an unstable limit cycle.

    ``da1/dt = -3 a2``, ``da2/dt = omega a1 - 4 (1 - 9 a1^2) a2``. Without the
    ``omega a1`` restoring term the whole ``a2 = 0`` axis consists of
    equilibria and there is no cycle; ``omega = 3`` is the van der Pol
    equation with ``mu = 4/3`` in the variables ``x = 3 a1``, ``y = 3 a2``,
    ``t = 3 tau``.
    """
    a1, a2 = _var(2, 0), _var(2, 1)
    f1 = -3.0 * a2
    f2 = float(omega) * a1 - 4.0 * (1.0 - 9.0 * a1 * a1) * a2
    return DynamicalSystem(2, (f1, f2), "vdp", ((0.0, 0.0),))


def sprott() -> DynamicalSystem:
    a1, a2, a3 = (_var(3, i) for i in range(3))
    f = (a2 + a3, -1.0 * a1 + 0.5 * a2, a1 * a1 - a3)
    return DynamicalSystem(3, f, "sprott", ((0.0, 0.0, 0.0), (-2.0, -4.0, 4.0)))


def lorenz96(F: float = 8.0, n: int = 5) -> DynamicalSystem:
    if n != 5:
        raise ValueError("only the five-mode Lorenz-96 system is built in")
    a = [_var(n, i) for i in range(n)]
    f = tuple(
        (a[(i + 1) % n] - a[(i - 2) % n]) * a[(i - 1) % n] - a[i] + float(F) for i in range(n)
    )
    return DynamicalSystem(n, f, "lorenz96", ((float(F),) * n,))


BUILTINS = {"vdp": van_der_pol, "sprott": sprott, "lorenz96": lorenz96}


def builtin(name: str, **params) -> DynamicalSystem:
    try:
        ctor = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}") from None
    return ctor(**params)


# Quadratic observables for the Sprott system, coefficients as printed:
# order a1^2, a1a2, a1a3, a2^2, a2a3, a3^2
_SPROTT_PHI = {
    "sprott_phi1": (0.33, 0.27, 1.28, 0.88, 0.49, 0.05),
    "sprott_phi2": (0.71, 0.59, 0.84, 0.42, 0.83, 0.31),
    "sprott_phi3": (0.75, 0.68, 1.04, 0.5, 1.52, 0.38),
    "sprott_phi4": (0.98, 0.3, 1.42, 0.6, 1.21, 0.02),
}
_QUAD3 = ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))

OBSERVABLES = ("vdp_energy", *_SPROTT_PHI, "l96_perturbation")


def builtin_observable(name: str, F: float = 8.0) -> Polynomial:
    if name == "vdp_energy":
        return Polynomial(2, {(2, 0): 1.0, (0, 2): 1.0})
    if name in _SPROTT_PHI:
        return Polynomial(3, dict(zip(_QUAD3, _SPROTT_PHI[name])))
    if name == "l96_perturbation":
        a1, a4 = _var(5, 0), _var(5, 3)
        return (a1 - F) ** 2 + (a4 - F) ** 2
    raise KeyError(f"unknown observable {name!r}; choose from {list(OBSERVABLES)}")


# -- file format ------------------------------------------------------------
class SystemFileError(PolyParseError):
    pass


def dump_system(system: DynamicalSystem) -> str:
    lines = [f"n={system.n}", f"name={system.name}"]
    for i, fi in enumerate(system.f, start=1):
        lines.append(f"f{i}:")
        lines.extend(fi.to_lines())
    for eq in system.known_equilibria:
        lines.append("equilibrium: " + " ".join(f"{v:.17g}" for v in eq))
    return "\n".join(lines) + "\n"


def save_system(system: DynamicalSystem, path) -> None:
    Path(path).write_text(dump_system(system))


def parse_system(text: str) -> DynamicalSystem:
    n = None
    name = "system"
    blocks: dict[int, list[tuple[int, str]]] = {}
    current = None
    equilibria = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("n="):
            try:
                n = int(line[2:])
            except ValueError:
                raise SystemFileError(f"line {lineno}: bad dimension {line!r}") from None
            if n < 1:
                raise SystemFileError(f"line {lineno}: dimension must be positive")
            continue
        if line.startswith("name="):
            name = line[5:].strip()
            continue
        if n is None:
            raise SystemFileError(f"line {lineno}: header 'n=<dim>' must come first")
        if line.startswith("equilibrium:"):
            vals = line[len("equilibrium:"):].split()
            if len(vals) != n:
                raise SystemFileError(f"line {lineno}: equilibrium needs {n} coordinates")
            try:
                equilibria.append(tuple(float(v) for v in vals))
            except ValueError as exc:
                raise SystemFileError(f"line {lineno}: {exc}") from None
            current = None
            continue
        if line.startswith("f") and line.endswith(":"):
            try:
                idx = int(line[1:-1])
            except ValueError:
                raise SystemFileError(f"line {lineno}: bad block header {line!r}") from None
            if not 1 <= idx <= n or idx in blocks:
                raise SystemFileError(f"line {lineno}: invalid or repeated component f{idx}")
            current = idx
            blocks[idx] = []
            continue
        if current is None:
            raise SystemFileError(f"line {lineno}: term outside of an f<i>: block")
        blocks[current].append((lineno, line))
    if n is None:
        raise SystemFileError("missing header 'n=<dim>'")
    missing = [i for i in range(1, n + 1) if i not in blocks]
    if missing:
        raise SystemFileError(f"missing component blocks: {', '.join(f'f{i}' for i in missing)}")
    f = []
    for i in range(1, n + 1):
        terms = []
        for lineno, line in blocks[i]:
            try:
                terms.append(Polynomial.from_lines(n, [line], first_lineno=lineno))
            except PolyParseError as exc:
                raise SystemFileError(str(exc)) from None
        fi = Polynomial(n, [t for p in terms for t in p.terms.items()])
        f.append(fi)
    system = DynamicalSystem(n, f, name)
    kept = []
    for eq in equilibria:
        res = np.max(np.abs(system(np.array(eq)))) if n else 0.0
        if res <= EQUILIBRIUM_TOL:
            kept.append(eq)
        else:
            warnings.warn(f"dropping claimed equilibrium {eq}: |f| = {res:.3g}", stacklevel=2)
    return DynamicalSystem(n, f, name, tuple(kept))


def load_system(path) -> DynamicalSystem:
    return parse_system(Path(path).read_text())


def resolve_system(spec: str, **params) -> DynamicalSystem:
    """A builtin name or a path to a system file."""
    if spec in BUILTINS:
        return builtin(spec, **params)
    return load_system(spec)


def resolve_observable(spec: str, n: int | None = None, **params) -> Polynomial:
    """A builtin observable name or a path to a polynomial term file (``n`` required)."""
    if spec in OBSERVABLES:
        return builtin_observable(spec, **params)
    text = Path(spec).read_text().splitlines()
    dims = [ln for ln in text if ln.strip().startswith("n=")]
    if dims:
        n = int(dims[0].strip()[2:])
        text = [ln for ln in text if not ln.strip().startswith("n=")]
    if n is None:
        raise ValueError("observable file needs an 'n=<dim>' header")
    return Polynomial.from_lines(n, text)


def bundled_system_file(name: str) -> Path:
    """Path of the shipped system file for a builtin (generated by ``write_bundled_files``)."""
    from importlib.resources import files

    if name not in BUILTINS:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}")
    return Path(str(files("sosupo") / "data" / f"{name}.sys"))


def write_bundled_files(directory) -> None:
    """Regenerate the system files of every builtin with default parameters."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in BUILTINS:
        save_system(builtin(name), d / f"{name}.sys")
