"""Shared fixtures: expensive simulation runs reused across test modules."""

import numpy as np
import pytest

from qlcsim.config import preset_config
from qlcsim.diagnostics import constraint_residuals, energy_breakdown, field_extremes
from qlcsim.qtensor import MaterialParams, TruncationConfig
from qlcsim.stepping import (
    OutputSettings,
    PicardSettings,
    SimConfig,
    SolverSettings,
    Stepper,
)


def dissipative_config(nx=16, dt=0.01, t_final=1.0):
    """The homogeneous-data problem used by the energy criteria.

    g = 0 and eps3 = 0 (so u = 0 identically), truncation on with R = 2,
    smooth nonzero Q0 vanishing on the boundary with leading eigenvalues
    inside the physical range, and mobility 0.5 so the relaxation transient
    is resolved by the coarsest step size used in the refinement studies.
    """
    material = MaterialParams(
        a=-0.3, b=-4.0, c=4.0, beta1=8.0, beta2=8.0,
        m=0.5, l=1.0, eps1=2.5, eps2=0.5, eps3=0.0,
    )

    def q0(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bump = np.cos(np.pi * x) * np.cos(np.pi * y)
        out = np.empty(np.broadcast(x, y).shape + (2, 2))
        out[..., 0, 0] = 0.2 * bump
        out[..., 0, 1] = 0.3 * x * bump
        out[..., 1, 0] = out[..., 0, 1]
        out[..., 1, 1] = -out[..., 0, 0]
        return out

    def zero_tensor(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2, 2))

    return SimConfig(
        x_min=-0.5, x_max=0.5, y_min=-0.5, y_max=0.5, nx=nx, ny=nx,
        material=material,
        truncation=TruncationConfig(mode="smooth_clamp", r=2.0, eps_t=None),
        dt=dt, t_final=t_final,
        g=lambda t, x, y: np.zeros(np.shape(x)),
        q0=q0,
        q_boundary=zero_tensor,
        picard=PicardSettings(),
        solver=SolverSettings(),
        output=OutputSettings(),
    )


class Trace:
    """Observer that records per-step diagnostics of a run."""

    def __init__(self, stepper):
        self.stepper = stepper
        self.states = []
        self.reports = []
        self.energies = []
        self.extremes = []
        self.residuals = []
        self.angles = []

    def __call__(self, state, report):
        cfg = self.stepper.cfg
        self.states.append(state)
        self.reports.append(report)
        self.energies.append(energy_breakdown(state, cfg.material, cfg.truncation))
        self.extremes.append(field_extremes(state.q))
        self.residuals.append(constraint_residuals(state.q))

    @property
    def times(self):
        return np.array([s.t for s in self.states])


@pytest.fixture(scope="session")
def exp1_run(tmp_path_factory):
    """Full Experiment-1 trajectory (30x30, dt=0.01, 200 steps) + artifacts."""
    from qlcsim.cli import RunWriter

    import time

    cfg, warnings = preset_config("exp1")
    out_dir = tmp_path_factory.mktemp("exp1")
    stepper = Stepper(cfg)
    trace = Trace(stepper)
    writer = RunWriter(stepper, out_dir)

    def observer(state, report):
        writer(state, report)
        trace(state, report)

    started = time.perf_counter()
    summary = stepper.run(observer)
    elapsed = time.perf_counter() - started
    writer.close()
    return {
        "summary": summary,
        "trace": trace,
        "stepper": stepper,
        "warnings": warnings,
        "out_dir": out_dir,
        "elapsed": elapsed,
    }


@pytest.fixture(scope="session")
def dissipative_run():
    """Criterion-2 problem: 100 steps on a 16x16 mesh."""
    cfg = dissipative_config(nx=16, dt=0.01, t_final=1.0)
    stepper = Stepper(cfg)
    trace = Trace(stepper)
    summary = stepper.run(trace)
    return {"summary": summary, "trace": trace, "stepper": stepper}


@pytest.fixture(scope="session")
def exp2_exponential_run(tmp_path_factory):
    """Blow-up experiment: no truncation, exponential forcing envelope."""
    from qlcsim.cli import run_experiment

    cfg, warnings = preset_config("exp2_exponential")
    out_dir = tmp_path_factory.mktemp("exp2_exponential")
    status, result = run_experiment(cfg, warnings, out_dir)
    return {
        "summary": result["summary"],
        "status": status,
        "rows": result["rows"],
        "out_dir": out_dir,
    }


@pytest.fixture(scope="session")
def dissipation_family(dissipative_run):
    """Dissipation sums for dt in {0.02, 0.01, 0.005} at fixed T = 1."""
    sums = {0.01: dissipative_run["summary"].dissipation_sum}
    for dt in (0.02, 0.005):
        cfg = dissipative_config(nx=16, dt=dt, t_final=1.0)
        sums[dt] = Stepper(cfg).run().dissipation_sum
    return sums


@pytest.fixture(scope="session")
def convergence_levels():
    """Final states of the dissipative problem at T = 0.5 under refinement."""
    levels = []
    for nx, dt in ((8, 0.04), (16, 0.02), (32, 0.01), (64, 0.005)):
        cfg = dissipative_config(nx=nx, dt=dt, t_final=0.5)
        summary = Stepper(cfg).run()
        assert summary.termination == "completed"
        levels.append(summary.final_state)
    return levels


@pytest.fixture(scope="session")
def sweep_results(tmp_path_factory):
    """Field-strength sweep artifacts driven through the CLI."""
    import os

    from qlcsim.cli import main

    out_dir = tmp_path_factory.mktemp("exp3_sweep")
    os.environ.setdefault("QLCSIM_SWEEP_PROCS", "2")
    status = main(["sweep", "--preset", "exp3_sweep", "--out", str(out_dir)])
    rows = []
    lines = (out_dir / "sweep.csv").read_text().splitlines()
    for line in lines[1:]:
        s, angle, norm = line.split(",")
        rows.append((float(s), float(angle), float(norm)))
    return {"status": status, "rows": rows, "out_dir": out_dir}
