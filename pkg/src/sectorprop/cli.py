"""Batch driver: configuration, the sector/propagation pipeline, output
files and sweep harnesses.

Modes
-----
solve       propagate the initial state to T, write metrics and snapshots
eigen       dump the first sector's eigenvalues and eigenfunctions
sectors     dump per-sector spectra and overlap diagnostics
quadcheck   print exponential-fitting exactness residuals
converge    sweep one axis (dt, N, dx, K) and tabulate errors
compare-cn  run the Crank-Nicolson comparator on the same problem

Outputs are plain text: metrics as key=value lines, tables and snapshots as
CSV with 17-significant-digit floats.  Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import propagator, quadrature, reference, sector, stationary
from .errors import ConfigError, NumericsError
from .mesh import SpatialMesh, build_mesh
from .potential import ProblemSpec, get_problem

MODES = ("solve", "eigen", "sectors", "quadcheck", "converge", "compare-cn")


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass(frozen=True)
class RunConfig:
    problem: str = "problem1:2"
    xmin: float | None = None
    xmax: float | None = None
    nx: int = 80
    t_final: float = 20.0
    n_sectors: int = 5
    n_basis: int = 12
    dt: float = 1.0
    order: int = 4
    mode: str = "solve"
    out: str = "out"
    snap: tuple[float, ...] = ()
    sweep: str | None = None
    values: tuple[float, ...] = ()
    n_refine: int = stationary.DEFAULT_REFINE

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.n_sectors < 1:
            raise ConfigError("K (sector count) must be >= 1")
        if self.n_basis < 1:
            raise ConfigError("N (basis size) must be >= 1")
        if self.nx < 1:
            raise ConfigError("nx must be >= 1")
        if not self.t_final > 0.0:
            raise ConfigError("T must be positive")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if self.order not in (2, 4):
            raise ConfigError("order must be 2 or 4")
        width = self.t_final / self.n_sectors
        n_sub = round(width / self.dt)
        if n_sub < 1 or abs(n_sub * self.dt - width) > 1e-9 * width:
            raise ConfigError(
                f"dt={self.dt} does not divide the sector width {width}")


def _resolve(config: RunConfig) -> tuple[ProblemSpec, SpatialMesh]:
    problem = get_problem(config.problem)
    xmin = config.xmin if config.xmin is not None else problem.x_min
    xmax = config.xmax if config.xmax is not None else problem.x_max
    mesh = build_mesh(xmin, xmax, config.nx)
    return problem, mesh


@dataclass
class SolveResult:
    config: RunConfig
    problem: ProblemSpec
    mesh: SpatialMesh
    psi: np.ndarray
    state: sector.CoefficientState
    last_sector: sector.TimeSector
    norms: list[float]
    snapshots: dict[float, np.ndarray]
    overlap_defects: list[float]
    wall_time_s: float

    def report(self) -> reference.ErrorReport:
        err_n = err_a = None
        if self.problem.exact is not None:
            exact = self.problem.exact(self.mesh.nodes, self.config.t_final)
            err_n = reference.err_norm(self.psi, exact, self.mesh)
            err_a = reference.err_abs(self.psi, exact)
        else:
            # the initial states are unit-normalized, so the norm defect is
            # still well defined without a reference solution
            norm = quadrature.composite_classical(np.abs(self.psi) ** 2,
                                                  self.mesh)
            err_n = float(norm - 1.0)
        return reference.ErrorReport(err_n=err_n, err_a=err_a,
                                     wall_time_s=self.wall_time_s,
                                     params=_echo_params(self))


def _echo_params(result: SolveResult) -> dict:
    c = result.config
    return {
        "problem": c.problem, "mode": c.mode,
        "xmin": result.mesh.x_min, "xmax": result.mesh.x_max,
        "nx": c.nx, "dx": result.mesh.dx,
        "T": c.t_final, "K": c.n_sectors, "N": c.n_basis,
        "dt": c.dt, "order": c.order, "n_refine": c.n_refine,
    }


def solve(config: RunConfig, problem: ProblemSpec | None = None,
          mesh: SpatialMesh | None = None,
          sectors: list[sector.TimeSector] | None = None) -> SolveResult:
    """Run the sector pipeline: build sectors k = 1..K in succession, project
    the initial state, propagate each sector and carry coefficients across
    boundaries.  Deterministic for a fixed config.

    Prebuilt sectors may be passed to share eigenbases between runs that
    differ only in dt (the sweep harness and the self-reference runs do).
    """
    config.validate()
    t0 = time.perf_counter()
    if problem is None or mesh is None:
        problem, mesh = _resolve(config)
    width = config.t_final / config.n_sectors
    cfg = propagator.PropagatorConfig(dt=config.dt, order=config.order)
    snap_times = sorted(set(config.snap))
    for ts in snap_times:
        if not 0.0 <= ts <= config.t_final:
            raise ConfigError(f"snapshot time {ts} outside [0, T]")

    snapshots: dict[float, np.ndarray] = {}
    norms: list[float] = []
    overlap_defects: list[float] = []

    state = None
    current = None
    prev = None
    for k in range(1, config.n_sectors + 1):
        t_left = (k - 1) * width
        t_right = k * width if k < config.n_sectors else config.t_final
        if sectors is not None:
            current = sectors[k - 1]
        else:
            current = sector.build_sector(k, t_left, t_right, problem, mesh,
                                          config.n_basis, previous=prev,
                                          order=4, n_refine=config.n_refine)
        if k == 1:
            state = sector.project_initial(problem.initial, current, mesh)
            if snap_times and abs(snap_times[0]) < 1e-12:
                snapshots[0.0] = sector.synthesize_wavefunction(state, current)
        else:
            state = sector.carry_coefficients(current, state)
            overlap_defects.append(
                float(np.abs(current.overlap - np.eye(*current.overlap.shape)
                             ).max()))

        def grab(st, sec=current):
            for ts in snap_times:
                if ts not in snapshots and abs(st.t - ts) <= 1e-9 * max(1.0, ts):
                    snapshots[ts] = sector.synthesize_wavefunction(st, sec)

        state = propagator.propagate_sector(state, current, cfg,
                                            norm_log=norms, on_substep=grab)
        prev = current

    psi = sector.synthesize_wavefunction(state, current)
    missing = [ts for ts in snap_times if ts not in snapshots]
    if missing:
        raise ConfigError(f"snapshot times {missing} do not land on substep "
                          "boundaries")
    return SolveResult(config=config, problem=problem, mesh=mesh, psi=psi,
                       state=state, last_sector=current, norms=norms,
                       snapshots=snapshots, overlap_defects=overlap_defects,
                       wall_time_s=time.perf_counter() - t0)


def build_sector_chain(config: RunConfig, problem: ProblemSpec | None = None,
                       mesh: SpatialMesh | None = None) -> list[sector.TimeSector]:
    """All K sectors of a run, for reuse across propagation variants."""
    config.validate()
    if problem is None or mesh is None:
        problem, mesh = _resolve(config)
    width = config.t_final / config.n_sectors
    chain = []
    prev = None
    for k in range(1, config.n_sectors + 1):
        prev = sector.build_sector(k, (k - 1) * width, k * width, problem,
                                   mesh, config.n_basis, previous=prev,
                                   order=4, n_refine=config.n_refine)
        chain.append(prev)
    return chain


# ----------------------------------------------------------------------------
# file emission
# ----------------------------------------------------------------------------

def _write_metrics(path: Path, report: reference.ErrorReport, extra=()):
    lines = []
    for key, value in report.params.items():
        lines.append(f"{key}={_fmt(value)}")
    if report.err_n is not None:
        lines.append(f"err_n={_fmt(report.err_n)}")
    if report.err_a is not None:
        lines.append(f"err_a={_fmt(report.err_a)}")
    for key, value in extra:
        lines.append(f"{key}={_fmt(value)}")
    lines.append(f"wall_time_s={_fmt(report.wall_time_s)}")
    path.write_text("\n".join(lines) + "\n")


def _write_snapshot(path: Path, mesh: SpatialMesh, psi: np.ndarray):
    with path.open("w") as fh:
        fh.write("x,re,im\n")
        for x, v in zip(mesh.nodes, psi):
            fh.write(f"{x:.17g},{v.real:.17g},{v.imag:.17g}\n")


def run(config: RunConfig, out_dir: str | Path | None = None
        ) -> reference.ErrorReport:
    """Solve-mode entry: run the pipeline and emit metrics plus snapshots."""
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    result = solve(config)
    report = result.report()
    _write_metrics(out / "metrics.txt", report,
                   extra=[("final_coefficient_norm", result.state.norm)])
    _write_snapshot(out / "psi_final.csv", result.mesh, result.psi)
    for ts, psi in result.snapshots.items():
        _write_snapshot(out / f"psi_t{ts:g}.csv", result.mesh, psi)
    return report


def _run_eigen(config: RunConfig, out: Path) -> int:
    problem, mesh = _resolve(config)
    width = config.t_final / config.n_sectors
    first = sector.build_sector(1, 0.0, width, problem, mesh, config.n_basis,
                                n_refine=config.n_refine)
    with (out / "eigenvalues.csv").open("w") as fh:
        fh.write("n,energy\n")
        for p in first.basis.pairs:
            fh.write(f"{p.index},{p.energy:.17g}\n")
    with (out / "eigenfunctions.csv").open("w") as fh:
        fh.write("x," + ",".join(f"y{p.index}" for p in first.basis.pairs) + "\n")
        ys = first.basis.y_matrix()
        for j, x in enumerate(mesh.nodes):
            fh.write(f"{x:.17g}," + ",".join(f"{ys[i, j]:.17g}"
                                             for i in range(first.size)) + "\n")
    print(f"wrote {out / 'eigenvalues.csv'} ({config.n_basis} states)")
    return 0


def _run_sectors(config: RunConfig, out: Path) -> int:
    chain = build_sector_chain(config)
    with (out / "sectors.csv").open("w") as fh:
        fh.write("k,t_mid,n,energy\n")
        for sec in chain:
            for p in sec.basis.pairs:
                fh.write(f"{sec.index},{sec.t_mid:.17g},{p.index},"
                         f"{p.energy:.17g}\n")
    with (out / "overlaps.csv").open("w") as fh:
        fh.write("k,max_abs_s_minus_i\n")
        for sec in chain[1:]:
            defect = np.abs(sec.overlap - np.eye(*sec.overlap.shape)).max()
            fh.write(f"{sec.index},{defect:.17g}\n")
    print(f"wrote {out / 'sectors.csv'} ({len(chain)} sectors)")
    return 0


def _run_quadcheck(config: RunConfig, out: Path) -> int:
    rng = np.random.default_rng(0)
    rows = []
    worst = 0.0
    nodes = np.array([-1.0, -1.0 / np.sqrt(5.0), 1.0 / np.sqrt(5.0), 1.0])
    for _ in range(100):
        z1s, z2s = rng.uniform(-30.0, 30.0, 2)
        rule = quadrature.build_ef_rule(z1s, z2s, 1.0, True)
        err = 0.0
        for zs in (z1s, z2s):
            mu = np.sqrt(complex(zs))
            f = np.exp(mu * nodes)
            df = mu * f
            exact = 2.0 * np.sinh(mu) / mu if mu != 0 else 2.0
            err = max(err, abs(rule.integrate(f.real, df.real) - exact.real)
                      / max(abs(exact), 1e-2))
            fx = nodes * f
            dfx = (1.0 + mu * nodes) * f
            exact2 = 2.0 * np.cosh(mu) / mu - 2.0 * np.sinh(mu) / mu ** 2 \
                if mu != 0 else 0.0
            err = max(err, abs(rule.integrate(fx.real, dfx.real)
                               - np.real(exact2)) / max(abs(exact2), 1e-2))
        rows.append((z1s, z2s, err, rule.degenerate))
        worst = max(worst, err)
    with (out / "quadcheck.csv").open("w") as fh:
        fh.write("z1_sq,z2_sq,max_rel_residual,degenerate\n")
        for z1s, z2s, err, deg in rows:
            fh.write(f"{z1s:.17g},{z2s:.17g},{err:.17g},{int(deg)}\n")
    print(f"quadcheck: worst EF exactness residual over 100 random pairs = "
          f"{worst:.3e}")
    return 0 if worst < 1e-11 else 3


def self_reference_config(config: RunConfig) -> RunConfig:
    """Reference-run settings for problems without an analytic solution:
    dt/8 and 10 extra basis states on the same mesh."""
    return replace(config, dt=config.dt / 8.0, n_basis=config.n_basis + 10)


def converge(config: RunConfig, axis: str, values, out_dir=None):
    """One solve per value of the sweep axis; errors against the analytic
    solution when available, otherwise against one shared self-reference run.

    Returns the table rows (value, err_n, err_a, wall_time_s, observed_order).
    """
    if axis not in ("dt", "N", "dx", "K"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    problem, mesh = _resolve(config)

    reference_psi = None
    if problem.exact is None:
        if axis == "dx":
            reference_psi = {}
        else:
            ref_cfg = self_reference_config(config)
            if axis == "dt":
                ref_cfg = replace(ref_cfg, dt=min(values) / 8.0)
            if axis == "N":
                ref_cfg = replace(ref_cfg, n_basis=int(max(values)) + 10)
            ref = solve(ref_cfg)
            reference_psi = ref.psi

    rows = []
    prev = None
    for v in values:
        if axis == "dt":
            cfg = replace(config, dt=float(v))
        elif axis == "N":
            cfg = replace(config, n_basis=int(v))
        elif axis == "K":
            cfg = replace(config, n_sectors=int(v))
        else:
            span = mesh.x_max - mesh.x_min
            cfg = replace(config, nx=int(round(span / float(v))))
        try:
            result = solve(cfg)
        except (ConfigError, NumericsError) as exc:
            rows.append((float(v), float("nan"), float("nan"), float("nan"),
                         float("nan")))
            print(f"sweep value {v}: failed ({exc})", file=sys.stderr)
            continue
        if problem.exact is not None:
            exact = problem.exact(result.mesh.nodes, cfg.t_final)
            e_n = reference.err_norm(result.psi, exact, result.mesh)
            e_a = reference.err_abs(result.psi, exact)
        elif isinstance(reference_psi, np.ndarray):
            e_n = reference.err_norm(result.psi, reference_psi, result.mesh)
            e_a = reference.err_abs(result.psi, reference_psi)
        else:
            norm = quadrature.composite_classical(np.abs(result.psi) ** 2,
                                                  result.mesh)
            e_n, e_a = float(norm - 1.0), float("nan")
        order = float("nan")
        if axis == "dt" and prev is not None and e_a > 0 and prev[1] > 0:
            order = np.log(prev[1] / e_a) / np.log(prev[0] / float(v))
        rows.append((float(v), e_n, e_a, result.wall_time_s, order))
        prev = (float(v), e_a)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "converge.csv").open("w") as fh:
            fh.write(f"{axis},err_n,err_a,wall_time_s,observed_order\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    return rows


def _run_compare_cn(config: RunConfig, out: Path) -> int:
    problem, mesh = _resolve(config)
    t0 = time.perf_counter()
    grid = reference.crank_nicolson_solve(problem, mesh.dx, config.dt,
                                          config.t_final)
    wall = time.perf_counter() - t0
    extra = [("cn_norm_drift", grid.norm_drift)]
    err_a = None
    if problem.exact is not None:
        exact = problem.exact(grid.x, config.t_final)
        err_a = reference.err_abs(grid.psi, exact)
    report = reference.ErrorReport(
        err_n=None, err_a=err_a, wall_time_s=wall,
        params={"problem": config.problem, "mode": "compare-cn",
                "dx": grid.dx, "dt": grid.dt, "T": config.t_final})
    _write_metrics(out / "metrics_cn.txt", report, extra=extra)
    print(f"CN comparator: err_a={err_a}, norm drift={grid.norm_drift:.3e}")
    return 0


# ----------------------------------------------------------------------------
# command line
# ----------------------------------------------------------------------------

def parse_config_file(path: str | Path) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


_KEY_TYPES = {
    "problem": str, "xmin": float, "xmax": float, "nx": int, "T": float,
    "K": int, "N": int, "dt": float, "order": int, "mode": str, "out": str,
    "snap": str, "sweep": str, "values": str, "refine": int,
}

_KEY_FIELDS = {
    "T": "t_final", "K": "n_sectors", "N": "n_basis", "refine": "n_refine",
}


def _parse_float_list(text: str) -> tuple[float, ...]:
    if not text:
        return ()
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"malformed number list {text!r}") from exc


def build_config(file_values: dict, cli_values: dict) -> RunConfig:
    """Merge config-file values and CLI flags (flags win)."""
    merged = dict(file_values)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    kwargs = {}
    for key, raw in merged.items():
        if key not in _KEY_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = _KEY_TYPES[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        name = _KEY_FIELDS.get(key, key)
        if key in ("snap", "values"):
            kwargs[name] = _parse_float_list(value)
        else:
            kwargs[name] = value
    return RunConfig(**kwargs)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sectorprop",
        description="Sectorwise eigenbasis solver for the 1D time-dependent "
                    "Schrodinger equation")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--problem", help="problem1:<n> | problem2 | problem3")
    parser.add_argument("--xmin", type=float)
    parser.add_argument("--xmax", type=float)
    parser.add_argument("--nx", type=int, help="number of spatial steps")
    parser.add_argument("--T", dest="T", type=float, help="final time")
    parser.add_argument("--K", dest="K", type=int, help="number of sectors")
    parser.add_argument("--N", dest="N", type=int, help="basis size")
    parser.add_argument("--dt", type=float, help="substep width")
    parser.add_argument("--order", type=int, choices=(2, 4))
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--snap", help="comma-separated snapshot times")
    parser.add_argument("--sweep", help="converge axis: dt | N | dx | K")
    parser.add_argument("--values", help="comma-separated sweep values")
    parser.add_argument("--refine", type=int,
                        help="internal eigensolver step subdivision")
    args = parser.parse_args(argv)

    try:
        file_values = parse_config_file(args.config) if args.config else {}
        cli_values = {k: getattr(args, k if k != "T" else "T")
                      for k in _KEY_TYPES
                      if getattr(args, k.replace("-", "_"), None) is not None}
        config = build_config(file_values, cli_values)
        config.validate()
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)

        if config.mode == "solve":
            report = run(config, out)
            print(f"err_n={report.err_n} err_a={report.err_a} "
                  f"wall_time_s={report.wall_time_s:.2f}")
            return 0
        if config.mode == "eigen":
            return _run_eigen(config, out)
        if config.mode == "sectors":
            return _run_sectors(config, out)
        if config.mode == "quadcheck":
            return _run_quadcheck(config, out)
        if config.mode == "converge":
            if not config.sweep:
                raise ConfigError("converge mode needs --sweep and --values")
            rows = converge(config, config.sweep, config.values, out)
            for row in rows:
                print(",".join(_fmt(v) for v in row))
            return 0
        if config.mode == "compare-cn":
            return _run_compare_cn(config, out)
        raise ConfigError(f"unhandled mode {config.mode}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
