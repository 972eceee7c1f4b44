import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from sosupo import cli
from sosupo.cli import (EXIT_AWAITING, EXIT_FAILED, EXIT_OK, EXIT_USAGE, OutputLock, PipelineConfig,
                        PipelineError, load_config, main, parse_config_text, report, run, stage_hash)
from sosupo.sdp import export_solution, import_sdpa, solve

VDP_ARGS = ["--system", "vdp", "--observable", "vdp_energy", "--degV", "16", "--eps", "1e-4",
            "--k_initial", "0.25", "--T_min", "0.5", "--T_max", "5", "--t_hunt", "30",
            "--starts", "50", "--refine_N_max", "1024"]


def vdp_config(out, **kw):
    base = dict(system="vdp", observable="vdp_energy", degV=16, eps=1e-4, k_initial=0.25, T_min=0.5,
                T_max=5.0, t_hunt=30.0, starts=50, refine_N_max=1024, output_dir=str(out))
    base.update(kw)
    return load_config(None, base)


@pytest.fixture(scope="module")
def vdp_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("vdp")
    assert main(["run", *VDP_ARGS, "--output_dir", str(out)]) == EXIT_OK
    return out


def manifest(out):
    return json.loads((Path(out) / "manifest.json").read_text())


# -- configuration ---------------------------------------------------------------
def test_config_text_parsing(tmp_path):
    text = "system = sprott  # builtin\n\nobservable=sprott_phi3\ndegV = 6\nprune = yes\n"
    assert parse_config_text(text) == {"system": "sprott", "observable": "sprott_phi3", "degV": 6,
                                       "prune": True}
    with pytest.raises(ValueError, match="line 2: unknown key 'colour'"):
        parse_config_text("degV = 6\ncolour = red\n")
    with pytest.raises(ValueError, match="line 1: expected key=value"):
        parse_config_text("degV 6\n")


def test_config_validation(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("system = vdp\nobservable = vdp_energy\ndegV = 16\nT_min = 0.5\nT_max = 5\n")
    cfg = load_config(path, {"eps": "1e-6", "seed": None})
    assert cfg.eps == 1e-6 and cfg.degV == 16 and cfg.seed == 0
    for bad in ({"degV": 5}, {"eps": 0}, {"k_initial": -1}, {"T_min": 6}, {"solver": "cloud"},
                {"t_hunt": 2}, {"N": 8}):
        with pytest.raises(ValueError):
            load_config(path, bad)


def test_stage_hashes_cascade():
    a = PipelineConfig("vdp", "vdp_energy", 16, T_min=0.5, T_max=5)
    b = PipelineConfig("vdp", "vdp_energy", 16, T_min=0.5, T_max=5, k_levels=3)
    c = PipelineConfig("vdp", "vdp_energy", 16, T_min=0.5, T_max=5, seed=1)
    assert stage_hash(a, "hunt") == stage_hash(b, "hunt") and stage_hash(a, "continue") != stage_hash(b, "continue")
    assert stage_hash(a, "bound") == stage_hash(c, "bound") and stage_hash(a, "minimize") != stage_hash(c, "minimize")
    assert stage_hash(a, "continue") != stage_hash(c, "continue")


# -- full runs -------------------------------------------------------------------
def test_vdp_run_artifacts(vdp_run):
    for name in ("certificate.txt", "cloud.csv", "events.csv", "trajectory.csv", "orbit_controlled.orbit",
                 "orbit_final.orbit", "plot_results.py", "branch/manifest.csv", "config.txt"):
        assert (vdp_run / name).exists(), name
    man = manifest(vdp_run)
    assert all(man["stages"][s]["status"] == "done" for s in cli.STAGES)
    assert man["seed"] == 0 and len(man["config_hash"]) == 16
    assert not (vdp_run / ".sosupo.lock").exists()
    compile((vdp_run / "plot_results.py").read_text(), "plot_results.py", "exec")


def test_vdp_run_result_matches_oracle(vdp_run):
    from conftest import vdp_cycle_average
    from sosupo.systems import builtin_observable

    s = manifest(vdp_run)["stages"]["continue"]["summary"]
    oracle = vdp_cycle_average(builtin_observable("vdp_energy"))
    assert s["k_values"][-1] == 0.0
    assert s["phi_average"] <= s["U"] and 0 <= s["gap_percent"] <= 0.1
    assert s["phi_average"] == pytest.approx(oracle, rel=1e-4)
    assert s["T"] == pytest.approx(2.3128, abs=1e-3)


def test_rerun_is_idempotent(vdp_run):
    before = {p: p.stat().st_mtime_ns for p in vdp_run.rglob("*") if p.is_file() and p.name not in
              ("manifest.json", "config.txt")}
    assert main(["run", *VDP_ARGS, "--output_dir", str(vdp_run)]) == EXIT_OK
    after = {p: p.stat().st_mtime_ns for p in before}
    assert before == after


def test_report(vdp_run, capsys):
    text = report(vdp_run)
    assert "U = 0.4667" in text and "T = 2.3128" in text and "gap =" in text and "shooting error" in text
    assert main(["report", str(vdp_run)]) == EXIT_OK
    assert "branch k values" in capsys.readouterr().out


def test_report_errors(tmp_path, capsys):
    with pytest.raises(FileNotFoundError):
        report(tmp_path)
    assert main(["report", str(tmp_path)]) == EXIT_USAGE
    assert "manifest" in capsys.readouterr().err


def test_stage_isolation_rebuilds_branch(vdp_run, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(vdp_run, copy)
    old_final = (copy / "orbit_final.orbit").read_text()
    cert_mtime = (copy / "certificate.txt").stat().st_mtime_ns
    shutil.rmtree(copy / "branch")
    assert run(vdp_config(copy)) == EXIT_OK
    assert (copy / "branch" / "manifest.csv").exists()
    assert (copy / "certificate.txt").stat().st_mtime_ns == cert_mtime
    assert (copy / "orbit_final.orbit").read_text() == old_final


def test_determinism_of_cloud_and_events(vdp_run, tmp_path):
    copy = tmp_path / "again"
    shutil.copytree(vdp_run, copy)
    for name in ("cloud.csv", "events.csv", "orbit_controlled.orbit"):
        (copy / name).unlink()
    assert run(vdp_config(copy), ["minimize", "hunt"]) == EXIT_OK
    for name in ("cloud.csv", "events.csv"):
        assert (copy / name).read_bytes() == (vdp_run / name).read_bytes()
    # the rerun predecessor leaves the later stage pending
    assert manifest(copy)["stages"]["continue"]["status"] == "pending"


def test_partial_run_marks_later_stages_pending(tmp_path):
    out = tmp_path / "partial"
    assert run(vdp_config(out, degV=6), ["bound"]) == EXIT_OK
    text = report(out)
    assert "[bound] done" in text and "[minimize] pending" in text and "[continue] pending" in text


def test_missing_predecessor_names_stage(tmp_path):
    out = tmp_path / "orphan"
    assert run(vdp_config(out), ["minimize"]) == EXIT_FAILED
    diag = (out / "error_minimize.txt").read_text()
    assert "rerun the 'bound' stage" in diag
    assert manifest(out)["stages"]["minimize"]["status"] == "failed"


def test_lock_excludes_second_pipeline(tmp_path):
    out = tmp_path / "locked"
    out.mkdir()
    with OutputLock(out):
        proc = subprocess.run([sys.executable, "-c",
                               "from pathlib import Path; from sosupo.cli import OutputLock;"
                               f"OutputLock(Path({str(out)!r})).__enter__()"], capture_output=True, text=True)
        assert proc.returncode != 0 and "in use" in proc.stderr
    # a lock left by a dead process is reclaimed
    (out / ".sosupo.lock").write_text("999999999")
    with OutputLock(out):
        assert (out / ".sosupo.lock").read_text() == str(os.getpid())


def test_external_solver_round_trip(tmp_path, capsys):
    out = tmp_path / "ext"
    args = ["run", "--system", "vdp", "--observable", "vdp_energy", "--degV", "6", "--T_min", "0.5",
            "--T_max", "5", "--solver", "external", "--output_dir", str(out), "--stages", "bound"]
    assert main(args) == EXIT_AWAITING
    assert manifest(out)["stages"]["bound"]["status"] == "awaiting-solution"
    problem = import_sdpa((out / "problem.dat-s").read_bytes())
    sol = solve(problem)
    (out / "solution.txt").write_bytes(export_solution(problem, sol))
    assert main(["import-sdp-solution", str(out), str(out / "solution.txt")]) == EXIT_OK
    rec = manifest(out)["stages"]["bound"]
    assert rec["status"] == "done" and rec["summary"]["external"]
    embedded = tmp_path / "emb"
    assert run(vdp_config(embedded, degV=6), ["bound"]) == EXIT_OK
    U_emb = manifest(embedded)["stages"]["bound"]["summary"]["U"]
    assert rec["summary"]["U"] == pytest.approx(U_emb, abs=1e-7)
    # a resumed run picks up the imported certificate without asking for a solution again
    assert main(args) == EXIT_OK


def test_export_sdp_verb(tmp_path):
    dest = tmp_path / "p.dat-s"
    assert main(["export-sdp", "--system", "vdp", "--observable", "vdp_energy", "--degV", "4",
                 "--T_min", "1", "--T_max", "2", "-o", str(dest)]) == EXIT_OK
    assert import_sdpa(dest.read_bytes()).m > 0


def test_usage_errors(capsys):
    assert main(["run", "--system", "vdp", "--observable", "vdp_energy", "--degV", "3",
                 "--T_min", "1", "--T_max", "2"]) == EXIT_USAGE
    assert main(["run", *VDP_ARGS, "--stages", "bound,plot"]) == EXIT_USAGE
    assert "unknown stage" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sosupo.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "import-sdp-solution" in proc.stdout
