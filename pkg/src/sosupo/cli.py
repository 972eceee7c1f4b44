"""Command-line pipeline: bound -> minimize -> hunt -> continue.

Every stage writes its artifacts into the output directory and records
itself in ``manifest.json`` together with a hash of the configuration it
depends on, so reruns skip finished stages and pick up where they stopped.

    sosupo run --config vdp.cfg
    sosupo run --system sprott --observable sprott_phi3 --degV 6 --eps 1e-8 \\
               --k_initial 0.1 --T_min 1 --T_max 20 --output_dir out/phi3
    sosupo report out/phi3
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("sosupo")

STAGES = ("bound", "minimize", "hunt", "continue")
EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_AWAITING = 0, 1, 2, 3

CERTIFICATE = "certificate.txt"
SDPA_PROBLEM = "problem.dat-s"
CLOUD = "cloud.csv"
TRAJECTORY = "trajectory.csv"
EVENTS = "events.csv"
CONTROLLED_ORBIT = "orbit_controlled.orbit"
BRANCH = "branch"
FINAL_ORBIT = "orbit_final.orbit"
PLOT_SCRIPT = "plot_results.py"
MANIFEST = "manifest.json"
LOCK = ".sosupo.lock"


class PipelineError(RuntimeError):
    pass


class AwaitingSolution(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class PipelineConfig:
    system: str = ""
    observable: str = ""
    degV: int = 0
    eps: float = 1e-4
    k_initial: float = 0.25
    T_min: float = 0.0
    T_max: float = 0.0
    N: int = 0  # 0: chosen from the period
    solver: str = "embedded"
    seed: int = 0
    output_dir: str = "sosupo-out"
    starts: int = 200
    t_hunt: float = 200.0
    control: str = "projected"
    prune: bool = False
    scale: str = ""  # comma-separated coordinate scales for the SDP
    k_levels: int = 6
    max_guesses: int = 5
    refine_N_max: int = 4096

    def validate(self) -> None:
        if not self.system or not self.observable:
            raise ValueError("config needs 'system' and 'observable'")
        if self.degV <= 0 or self.degV % 2:
            raise ValueError("degV must be a positive even integer")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.k_initial < 0:
            raise ValueError("k_initial must be nonnegative")
        if not 0 < self.T_min < self.T_max:
            raise ValueError("need 0 < T_min < T_max for the recurrence window")
        if self.N and self.N < 16:
            raise ValueError("N must be at least 16 (or 0 for automatic)")
        if self.solver not in ("embedded", "external"):
            raise ValueError("solver must be 'embedded' or 'external'")
        if self.control not in ("projected", "gradient"):
            raise ValueError("control must be 'projected' or 'gradient'")
        if self.starts < 1 or self.t_hunt <= self.T_max:
            raise ValueError("need starts >= 1 and t_hunt > T_max")
        if self.scale_tuple() is not None and min(self.scale_tuple()) <= 0:
            raise ValueError("scale factors must be positive")

    def scale_tuple(self):
        if not self.scale.strip():
            return None
        return tuple(float(v) for v in self.scale.replace(" ", "").split(","))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _convert(name: str, raw):
    kind = type(getattr(PipelineConfig(), name))
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        val = str(raw).strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind is int:
        return int(float(raw)) if float(raw).is_integer() else int(raw)
    return kind(raw)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key = key.strip()
        if not eq:
            raise ValueError(f"config line {lineno}: expected key=value")
        if key not in _FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _convert(key, val.strip())
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: {exc}") from None
    return out


def load_config(path=None, overrides=None) -> PipelineConfig:
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _convert(k, v)
    cfg = PipelineConfig(**values)
    cfg.validate()
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


# which config keys each stage depends on (in addition to its predecessors)
_STAGE_KEYS = {
    "bound": ("system", "observable", "degV", "solver", "prune", "scale"),
    "minimize": ("eps", "starts", "seed"),
    "hunt": ("k_initial", "T_min", "T_max", "N", "t_hunt", "control", "max_guesses"),
    "continue": ("k_levels", "refine_N_max"),
}


def stage_hash(cfg: PipelineConfig, stage: str) -> str:
    d = cfg.to_dict()
    keys = []
    for s in STAGES:
        keys.extend(_STAGE_KEYS[s])
        if s == stage:
            break
    blob = json.dumps({k: d[k] for k in keys}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_hash(cfg: PipelineConfig) -> str:
    return stage_hash(cfg, STAGES[-1])


# ---------------------------------------------------------------------------
# manifest and lock
# ---------------------------------------------------------------------------
def read_manifest(out: Path) -> dict:
    path = out / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {out}; run the pipeline first")
    return json.loads(path.read_text())


def write_manifest(out: Path, man: dict) -> None:
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(man, indent=2, sort_keys=True, default=_jsonable) + "\n")
    os.replace(tmp, out / MANIFEST)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


class OutputLock:
    """Exclusive ownership of an output directory; stale locks are reclaimed."""

    def __init__(self, out: Path):
        self.path = out / LOCK

    def __enter__(self):
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            except FileExistsError:
                if self._stale():
                    self.path.unlink(missing_ok=True)
                    continue
                raise PipelineError(f"{self.path.parent} is in use by another pipeline ({self.path})")
            with os.fdopen(fd, "w") as fh:
                fh.write(str(os.getpid()))
            return self
        raise PipelineError(f"could not acquire {self.path}")

    def _stale(self) -> bool:
        try:
            pid = int(self.path.read_text().strip())
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            return False
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------
def _problem(cfg: PipelineConfig):
    from .systems import resolve_observable, resolve_system

    system = resolve_system(cfg.system)
    observable = resolve_observable(cfg.observable, system.n)
    return system, observable


def build_spec(cfg: PipelineConfig):
    from .sosbound import RelaxationSpec, prune_basis

    system, observable = _problem(cfg)
    spec = RelaxationSpec(system, observable, cfg.degV, scale=cfg.scale_tuple(),
                          basis_cap=10**9 if cfg.solver == "external" else 400)
    if cfg.prune:
        spec = RelaxationSpec(system, observable, cfg.degV, basis_sigma=prune_basis(spec),
                              scale=spec.scale, basis_cap=spec.basis_cap)
    return spec


def stage_rng(cfg: PipelineConfig, stage: str) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, STAGES.index(stage)])


def _controlled_field(cfg, system, gap, k):
    from .flow import ControlledField

    return ControlledField(system, gap, k, cfg.control)


def _gap(cfg, out):
    from .gapmin import build_gap
    from .sosbound import load_certificate

    system, observable = _problem(cfg)
    cert = load_certificate(_need(out, CERTIFICATE, "bound"))
    return system, observable, cert, build_gap(cert, system, observable)


def _need(out: Path, name: str, stage: str) -> Path:
    path = out / name
    if not path.exists():
        raise PipelineError(f"missing {name}; rerun the '{stage}' stage")
    return path


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------
def stage_bound(cfg: PipelineConfig, out: Path) -> dict:
    from .sdp import export_sdpa
    from .sosbound import build_relaxation, save_certificate, solve_bound

    spec = build_spec(cfg)
    if cfg.solver == "external":
        problem, _ = build_relaxation(spec)
        (out / SDPA_PROBLEM).write_bytes(export_sdpa(problem))
        raise AwaitingSolution(
            f"wrote {out / SDPA_PROBLEM}; solve it externally and run "
            f"'sosupo import-sdp-solution {out} <solution file>'")
    cert = solve_bound(spec)
    save_certificate(cert, out / CERTIFICATE)
    if not cert.ok:
        raise PipelineError(f"bound computation ended with status {cert.status.value}; "
                            f"residuals {cert.residuals}")
    return {"U": cert.U, "certificate_status": cert.status.value, "basis_size": len(spec.basis_sigma),
            **{k: cert.residuals[k] for k in ("min_gram_eigenvalue", "max_coeff_mismatch")}}


def stage_minimize(cfg: PipelineConfig, out: Path) -> dict:
    from .gapmin import attractor_box, minimize_multistart, uniform_starts

    system, _, _, gap = _gap(cfg, out)
    rng = stage_rng(cfg, "minimize")
    lo, hi, box_ok = attractor_box(system, rng)
    starts = uniform_starts(lo, hi, cfg.starts, rng)
    cloud = minimize_multistart(gap, starts, cfg.eps)
    cloud.to_csv(out / CLOUD)
    if not len(cloud):
        raise PipelineError(f"no minimizer of D reached eps = {cfg.eps:g}; "
                            "raise eps or the number of starts")
    return {"cloud_size": len(cloud), "best_D": float(cloud.values[0]), "box_from_attractor": box_ok,
            "box_lo": lo.tolist(), "box_hi": hi.tolist(), "skipped_starts": len(cloud.skipped)}


def stage_hunt(cfg: PipelineConfig, out: Path) -> dict:
    from .flow import integrate
    from .gapmin import PointCloud
    from .recurrence import extract_segment, save_events, scan
    from .varorbit import converge, prime_period, save_orbit

    system, _, _, gap = _gap(cfg, out)
    cloud = PointCloud.from_csv(_need(out, CLOUD, "minimize"))
    if not len(cloud):
        raise PipelineError("the point cloud is empty; rerun 'minimize' with a larger eps")
    cf = _controlled_field(cfg, system, gap, cfg.k_initial)
    traj = integrate(cf, cloud.best(), (0.0, cfg.t_hunt))
    traj.to_csv(out / TRAJECTORY)
    if traj.diverged:
        raise PipelineError(f"controlled trajectory diverged at t = {traj.t1:.6g}")
    events = scan(traj, cfg.T_min, cfg.T_max)
    save_events(events, out / EVENTS)
    if not events:
        raise PipelineError("no near recurrence below the threshold; widen [T_min, T_max] "
                            "or lengthen t_hunt")
    attempts = []
    for ev in events[: cfg.max_guesses]:
        guess = extract_segment(traj, ev, N=cfg.N or None, k=cfg.k_initial)
        orbit = converge(guess, cf)
        attempts.append({"t": ev.t, "T": ev.T, "R": ev.R, "cost": orbit.final_cost,
                         "converged": orbit.converged, "message": orbit.message})
        if orbit.converged:
            unwound = prime_period(orbit)
            if unwound is not orbit:
                again = converge(unwound, cf)
                orbit = again if again.converged else orbit
            save_orbit(orbit, out / CONTROLLED_ORBIT)
            return {"events": len(events), "best_R": events[0].R, "attempts": attempts,
                    "T": orbit.T, "N": orbit.N, "cost": orbit.final_cost}
    raise PipelineError(f"none of the {len(attempts)} best guesses converged: {attempts}")


def stage_continue(cfg: PipelineConfig, out: Path) -> dict:
    from .continuation import KSchedule, continue_orbit, refine_endpoint, save_branch
    from .varorbit import extrapolated_average, load_orbit, orbit_average, save_orbit

    system, observable, cert, gap = _gap(cfg, out)
    start = load_orbit(_need(out, CONTROLLED_ORBIT, "hunt"))
    cf = _controlled_field(cfg, system, gap, start.k)
    branch = continue_orbit(start, cf, KSchedule.halving(start.k, cfg.k_levels))
    save_branch(branch, out / BRANCH)
    if not branch.complete:
        raise PipelineError(f"continuation stopped: {branch.message}")
    final, errors = refine_endpoint(branch.final, cf.with_k(0.0), N_max=max(cfg.refine_N_max, branch.final.N))
    save_orbit(final, out / FINAL_ORBIT)
    raw = orbit_average(observable, final)
    avg, avg_err, _ = extrapolated_average(observable, final, cf.with_k(0.0))
    write_plot_script(out, system.n)
    return {"k_values": branch.ks, "T": final.T, "N": final.N, "cost": final.final_cost,
            "phi_average": avg, "phi_average_error": avg_err, "phi_average_loop": raw, "U": cert.U, "gap_percent": 100.0 * (cert.U - avg) / abs(cert.U),
            "shooting_error": errors[-1][1], "refinement": errors}


_RUNNERS = {"bound": stage_bound, "minimize": stage_minimize, "hunt": stage_hunt,
            "continue": stage_continue}
_ARTIFACTS = {"bound": [CERTIFICATE], "minimize": [CLOUD], "hunt": [CONTROLLED_ORBIT, EVENTS],
              "continue": [BRANCH, FINAL_ORBIT]}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------
def _fresh_manifest(cfg: PipelineConfig) -> dict:
    return {"config": cfg.to_dict(), "config_hash": config_hash(cfg), "seed": cfg.seed,
            "stages": {s: {"status": "pending"} for s in STAGES}}


def _stage_done(man: dict, cfg: PipelineConfig, stage: str, out: Path) -> bool:
    rec = man["stages"].get(stage, {})
    return (rec.get("status") == "done" and rec.get("hash") == stage_hash(cfg, stage)
            and all((out / a).exists() for a in _ARTIFACTS[stage]))


def run(cfg: PipelineConfig, stages=STAGES) -> int:
    """Run the requested stages in pipeline order; returns a process exit status."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    wanted = [s for s in STAGES if s in stages]
    with OutputLock(out):
        try:
            man = read_manifest(out)
        except FileNotFoundError:
            man = _fresh_manifest(cfg)
        man["config"] = cfg.to_dict()
        man["config_hash"] = config_hash(cfg)
        man["seed"] = cfg.seed
        (out / "config.txt").write_text(dump_config(cfg))
        invalid = False
        for stage in STAGES:
            if stage not in wanted:
                # a rerun predecessor invalidates later stages
                if invalid:
                    man["stages"][stage] = {"status": "pending"}
                continue
            if not invalid and _stage_done(man, cfg, stage, out):
                log.info("%s: up to date, skipped", stage)
                continue
            invalid = True
            log.info("%s: running", stage)
            man["stages"][stage] = {"status": "running", "hash": stage_hash(cfg, stage)}
            write_manifest(out, man)
            try:
                summary = _RUNNERS[stage](cfg, out)
            except AwaitingSolution as msg:
                man["stages"][stage] = {"status": "awaiting-solution", "hash": stage_hash(cfg, stage)}
                write_manifest(out, man)
                print(str(msg), file=sys.stderr)
                return EXIT_AWAITING
            except Exception as exc:  # any stage failure becomes a diagnostic file
                diag = out / f"error_{stage}.txt"
                diag.write_text(f"stage {stage} failed: {exc}\n\n{traceback.format_exc()}")
                man["stages"][stage] = {"status": "failed", "hash": stage_hash(cfg, stage),
                                        "error": str(exc), "diagnostic": diag.name}
                write_manifest(out, man)
                print(f"stage {stage} failed: {exc} (details in {diag})", file=sys.stderr)
                return EXIT_FAILED
            (out / f"error_{stage}.txt").unlink(missing_ok=True)
            man["stages"][stage] = {"status": "done", "hash": stage_hash(cfg, stage), "summary": summary}
            write_manifest(out, man)
            log.info("%s: done", stage)
        write_manifest(out, man)
    return EXIT_OK


def import_sdp_solution(out: Path, solution_path: Path) -> int:
    """Finish an external-mode bound stage from a solver's SDPA output."""
    from .sdp import import_solution
    from .sosbound import build_relaxation, extract_certificate, save_certificate

    man = read_manifest(out)
    cfg = PipelineConfig(**man["config"])
    with OutputLock(out):
        problem, decoding = build_relaxation(build_spec(cfg))
        sol = import_solution(problem, Path(solution_path).read_bytes())
        cert = extract_certificate(problem, decoding, sol, build_spec(cfg))
        save_certificate(cert, out / CERTIFICATE)
        rec = {"hash": stage_hash(cfg, "bound"), "summary": {
            "U": cert.U, "certificate_status": cert.status.value, "sdp_status": sol.status.value,
            "external": True, **cert.residuals}}
        rec["status"] = "done" if cert.ok else "failed"
        man["stages"]["bound"] = rec
        for s in STAGES[1:]:
            man["stages"][s] = {"status": "pending"}
        write_manifest(out, man)
    if not cert.ok:
        print(f"imported solution gives certificate status {cert.status.value}", file=sys.stderr)
        return EXIT_FAILED
    print(f"certificate written: U = {cert.U:.10g} ({cert.status.value})")
    return EXIT_OK


def report(out) -> str:
    out = Path(out)
    man = read_manifest(out)
    cfg = man["config"]
    lines = [f"output directory: {out}",
             f"system {cfg['system']}, observable {cfg['observable']}, degV {cfg['degV']}, "
             f"seed {man.get('seed')}, config hash {man.get('config_hash')}"]
    for stage in STAGES:
        rec = man["stages"].get(stage, {"status": "pending"})
        lines.append(f"[{stage}] {rec['status']}" + (f": {rec['error']}" if "error" in rec else ""))
        s = rec.get("summary") or {}
        if stage == "bound" and "U" in s:
            lines.append(f"    U = {s['U']:.10g} ({s['certificate_status']})")
        elif stage == "minimize" and "best_D" in s:
            lines.append(f"    {s['cloud_size']} minimizers, best D = {s['best_D']:.3e}")
        elif stage == "hunt" and "events" in s:
            lines.append(f"    {s['events']} recurrence events (best R = {s['best_R']:.3e}); "
                         f"controlled orbit T = {s['T']:.8g}, cost {s['cost']:.3e}")
        elif stage == "continue" and "T" in s:
            ks = ", ".join(f"{k:g}" for k in s["k_values"])
            lines.append(f"    branch k values: {ks}")
            lines.append(f"    final orbit: T = {s['T']:.10g}, N = {s['N']}, cost {s['cost']:.3e}")
            lines.append(f"    Phi average = {s['phi_average']:.10g} (+/- {s.get('phi_average_error', float('nan')):.1e}), "
                         f"U = {s['U']:.10g}, "
                         f"gap = {s['gap_percent']:.4g}%")
            lines.append(f"    shooting error = {s['shooting_error']:.3e}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# plot script
# ---------------------------------------------------------------------------
_PLOT_TEMPLATE = '''"""Orbit projections and D-minimizer overlays. Run: python {name}"""
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

here = Path(__file__).resolve().parent
n = {n}


def orbit(path):
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


cloud = np.loadtxt(here / "{cloud}", delimiter=",", comments="#", ndmin=2)
final = orbit(here / "{final}")
branch = sorted((here / "{branch}").glob("k_*.orbit"))
pairs = [(0, 1)] + ([(0, 2), (1, 2)] if n > 2 else [])
fig, axes = plt.subplots(1, len(pairs), figsize=(5 * len(pairs), 4.5), squeeze=False)
for ax, (i, j) in zip(axes[0], pairs):
    for path in branch:
        P = orbit(path)
        ax.plot(np.r_[P[:, i], P[0, i]], np.r_[P[:, j], P[0, j]], lw=0.6, alpha=0.5)
    ax.plot(np.r_[final[:, i], final[0, i]], np.r_[final[:, j], final[0, j]], "k", lw=1.5,
            label="k = 0 orbit")
    if cloud.size:
        ax.plot(cloud[:, i], cloud[:, j], "o", ms=3, color="tab:blue", label="minimizers of D")
    ax.set_xlabel(f"a{{i + 1}}")
    ax.set_ylabel(f"a{{j + 1}}")
axes[0][0].legend()
fig.tight_layout()
fig.savefig(here / "orbits.png", dpi=150)
plt.show()
'''


def write_plot_script(out: Path, n: int) -> Path:
    path = out / PLOT_SCRIPT
    path.write_text(_PLOT_TEMPLATE.format(name=PLOT_SCRIPT, n=n, cloud=CLOUD, final=FINAL_ORBIT,
                                          branch=BRANCH))
    return path


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------
def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for name in _FIELDS:
        p.add_argument(f"--{name}", dest=name, default=None, metavar=name.upper())


def _config_from_args(args) -> PipelineConfig:
    return load_config(args.config, {k: getattr(args, k) for k in _FIELDS})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sosupo", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="run pipeline stages")
    _add_config_flags(p)
    p.add_argument("--stages", default=",".join(STAGES),
                   help="comma-separated subset of " + ",".join(STAGES))
    p = sub.add_parser("report", help="summarise an output directory")
    p.add_argument("output_dir")
    p = sub.add_parser("export-sdp", help="write the bound SDP in SDPA sparse format")
    _add_config_flags(p)
    p.add_argument("-o", "--out", help="destination file (default: <output_dir>/problem.dat-s)")
    p = sub.add_parser("import-sdp-solution", help="import an external SDP solution")
    p.add_argument("output_dir")
    p.add_argument("solution")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "run":
            cfg = _config_from_args(args)
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            bad = set(stages) - set(STAGES)
            if bad:
                raise ValueError(f"unknown stage(s) {sorted(bad)}; choose from {list(STAGES)}")
            return run(cfg, stages)
        if args.verb == "report":
            print(report(args.output_dir))
            return EXIT_OK
        if args.verb == "export-sdp":
            from .sdp import export_sdpa
            from .sosbound import build_relaxation

            cfg = _config_from_args(args)
            problem, _ = build_relaxation(build_spec(cfg))
            dest = Path(args.out) if args.out else Path(cfg.output_dir) / SDPA_PROBLEM
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(export_sdpa(problem))
            print(f"wrote {dest} ({problem.m} constraints, blocks {problem.blocks})")
            return EXIT_OK
        if args.verb == "import-sdp-solution":
            return import_sdp_solution(Path(args.output_dir), Path(args.solution))
    except (ValueError, KeyError, FileNotFoundError, PipelineError) as exc:
        print(f"sosupo: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
