"""Command-line sweeps: analytic curves, simulation, comparison and repeater grids.

Settings come from a preset, then an optional ``key=value`` file, then
flags, each layer overriding the previous one.  Every command validates the
whole sweep before computing anything and writes its CSV atomically.

Exit codes: 0 success, 1 invalid input, 2 comparison outside tolerance,
3 internal invariant violated.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from telesched import laplace, markov, qmath, repeater, sim
from telesched.errors import InvariantViolation

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE, EXIT_INVARIANT = 0, 1, 2, 3

LL = ("lifo-po", "lifo-po")
FL = ("fifo-po", "lifo-po")  # FIFO requests, LIFO pairs
FF = ("fifo-po", "fifo-po")

PRESETS: dict[str, dict[str, str]] = {
    "fig3": dict(
        gamma="0.01", lambda_e="5", buf_r="10", buf_e="10", sweep="load",
        grid_min="0.05", grid_max="1", grid_points="20", grid_scale="linear",
        pairs="lifo-po/lifo-po,fifo-po/lifo-po,fifo-po/fifo-po",
    ),
    "fig4": dict(
        gamma="0.01", lambda_e="5", sweep="load", buffers="2,5,10",
        grid_min="0.1", grid_max="1.9", grid_points="19", grid_scale="linear",
        pairs="lifo-po/lifo-po,fifo-po/lifo-po",
    ),
    "fig5": dict(
        gamma="0.01", lambda_e="5", sweep="load", buffers="2,5,10",
        grid_min="0.1", grid_max="1.9", grid_points="19", grid_scale="linear",
        pairs="lifo-po/lifo-po",
    ),
    "fig6": dict(
        gamma="0.01", sweep="mu", buffers="2,5,10",
        grid_min="0.1", grid_max="100", grid_points="13", grid_scale="log",
        pairs="lifo-po/lifo-po",
    ),
}

DEFAULTS = dict(
    gamma="0.01", lambda_e="5", lambda_r="2.5", buf_e="10", buf_r="10",
    disc_r="lifo-po", disc_e="lifo-po", seed="1", events="1000000",
    grid_min="0.1", grid_max="1", grid_points="10", grid_scale="linear",
    sweep="load", theta=repr(math.pi / 2), phi="0", output="-",
)

CONFIG_KEYS = frozenset(DEFAULTS) | {"pairs", "buffers", "workers"}


class ValidationError(ValueError):
    pass


# ---- configuration ----------------------------------------------------------


def read_config(path: str) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep:
            raise ValidationError(f"{path}:{no}: expected key=value")
        if key not in CONFIG_KEYS:
            raise ValidationError(f"{path}:{no}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _float(settings, key, *, positive=False, nonneg=False) -> float:
    try:
        v = float(settings[key])
    except ValueError:
        raise ValidationError(f"{key} must be a number, got {settings[key]!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"{key} must be finite")
    if positive and v <= 0:
        raise ValidationError(f"{key} must be > 0")
    if nonneg and v < 0:
        raise ValidationError(f"{key} must be >= 0")
    return v


def _int(settings, key, minimum=None) -> int:
    try:
        v = int(settings[key])
    except ValueError:
        raise ValidationError(f"{key} must be an integer, got {settings[key]!r}") from None
    if minimum is not None and v < minimum:
        raise ValidationError(f"{key} must be >= {minimum}")
    return v


def _buffer(settings, key) -> int | None:
    if settings[key].strip().lower() in ("inf", "none", "unbounded"):
        return None
    return _int(settings, key, minimum=0)


def _discipline_name(name: str) -> str:
    key = name.strip().lower()
    try:
        laplace.Discipline.from_name(key, 1)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    return key


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: swept axis, grid, fixed parameters and discipline pairs."""

    sweep: str
    grid: tuple
    gamma: float
    lambda_e: float
    lambda_r: float
    buf_r: int | None
    buf_e: int | None
    pairs: tuple  # ((disc_r, disc_e), ...)
    buffers: tuple = ()  # one series per size when non-empty
    qubit: qmath.PureQubit = qmath.PLUS
    seed: int = 1
    events: int = 1_000_000
    output: str = "-"
    workers: int = 0
    series: tuple = field(default=(), init=False)

    def __post_init__(self):
        series = []
        for b in self.buffers or (None,):
            for pr, pe in self.pairs:
                label = f"{pr}/{pe}" + (f"@B{b}" if b is not None else "")
                br, be = (self.buf_r, self.buf_e) if b is None else (b, b)
                # fifo/lifo mean an unbounded buffer on that side
                br = None if pr in laplace.ORDERS else br
                be = None if pe in laplace.ORDERS else be
                series.append((label, pr, pe, br, be))
        object.__setattr__(self, "series", tuple(series))

    def points(self):
        """``(x, label, cfg_kwargs, disc_r, disc_e)`` in output order."""
        for x in self.grid:
            for label, pr, pe, br, be in self.series:
                lam_r, b_r, b_e = self.lambda_r, br, be
                if self.sweep == "load":
                    lam_r = x * self.lambda_e
                elif self.sweep == "buffer":
                    b_r = None if b_r is None else int(x)
                    b_e = None if b_e is None else int(x)
                yield x, label, dict(lambda_r=lam_r, buf_r=b_r, buf_e=b_e), pr, pe

    def config(self, lambda_r, buf_r, buf_e) -> markov.DoubleQueueConfig:
        return markov.DoubleQueueConfig(self.lambda_e, lambda_r, buf_e, buf_r, self.gamma, self.gamma)

    def curves(self):
        p = qmath.DephasingParams(self.gamma)
        return qmath.curve_request(self.qubit, p), qmath.curve_epr(self.qubit, p)


def make_grid(lo: float, hi: float, n: int, scale: str) -> tuple:
    if n < 2:
        raise ValidationError("grid_points must be >= 2")
    if not lo < hi:
        raise ValidationError("grid_min must be < grid_max")
    if scale == "linear":
        g = np.linspace(lo, hi, n)
    elif scale == "log":
        if lo <= 0:
            raise ValidationError("log grid needs grid_min > 0")
        g = np.geomspace(lo, hi, n)
    else:
        raise ValidationError(f"grid_scale must be linear or log, got {scale!r}")
    # trim float noise so CSV x values read cleanly
    return tuple(float(f"{v:.12g}") for v in g)


def build_spec(settings: dict[str, str], command: str) -> SweepSpec:
    sweep = settings["sweep"].strip().lower()
    allowed = ("mu",) if command == "repeater" else ("load", "buffer")
    if sweep not in allowed:
        raise ValidationError(f"{command} sweeps {' or '.join(allowed)}, not {sweep!r}")
    grid = make_grid(
        _float(settings, "grid_min"), _float(settings, "grid_max"),
        _int(settings, "grid_points"), settings["grid_scale"].strip().lower(),
    )
    if sweep in ("load", "mu") and grid[0] <= 0:
        raise ValidationError(f"{sweep} grid must be > 0")
    if sweep == "buffer" and any(v != int(v) or v < 1 for v in grid):
        raise ValidationError("buffer grid must contain positive integers")
    if "pairs" in settings:
        pairs = []
        for item in settings["pairs"].split(","):
            r, sep, e = item.partition("/")
            if not sep:
                raise ValidationError(f"pair {item!r} must read disc_r/disc_e")
            pairs.append((_discipline_name(r), _discipline_name(e)))
    else:
        pairs = [(_discipline_name(settings["disc_r"]), _discipline_name(settings["disc_e"]))]
    for pr, pe in pairs:
        if pr in laplace.ORDERS and pe in laplace.ORDERS:
            raise ValidationError("at most one side may use an unbounded buffer")
    buffers = ()
    if settings.get("buffers"):
        try:
            buffers = tuple(int(b) for b in settings["buffers"].split(","))
        except ValueError:
            raise ValidationError("buffers must be a comma list of integers") from None
        if any(b < 1 for b in buffers):
            raise ValidationError("buffers must be >= 1")
    theta, phi = _float(settings, "theta"), _float(settings, "phi")
    spec = SweepSpec(
        sweep=sweep,
        grid=grid,
        gamma=_float(settings, "gamma", nonneg=True),
        lambda_e=_float(settings, "lambda_e", positive=True),
        lambda_r=_float(settings, "lambda_r", positive=True),
        buf_r=_buffer(settings, "buf_r"),
        buf_e=_buffer(settings, "buf_e"),
        pairs=tuple(pairs),
        buffers=buffers,
        qubit=qmath.PureQubit.from_angles(theta, phi),
        seed=_int(settings, "seed", minimum=0),
        events=_int(settings, "events", minimum=1),
        output=settings["output"],
        workers=_int(settings, "workers", minimum=0) if "workers" in settings else 0,
    )
    if command == "repeater":
        if not spec.buffers:
            raise ValidationError("repeater needs buffers=")
        for pr, pe in spec.pairs:
            if pr != pe or pr in laplace.ORDERS:
                raise ValidationError("repeater sides share one finite-buffer discipline")
        return spec
    # every grid point must give a valid queue before any work starts
    for _, _, kw, pr, pe in spec.points():
        try:
            cfg = spec.config(**kw)
            if pr not in laplace.ORDERS:
                laplace.Discipline.from_name(pr, cfg.buf_r)
            if pe not in laplace.ORDERS:
                laplace.Discipline.from_name(pe, cfg.buf_e)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
    return spec


# ---- evaluation -------------------------------------------------------------


NAN = math.nan


def _analytic_point(spec: SweepSpec, kw, pr, pe):
    cr, ce = spec.curves()
    cfg = spec.config(**kw)
    try:
        ph = laplace.solve_phases(cfg, pr, pe)
        mean = laplace.phase_conditioned_mean(cfg, pr, pe, cr, ce)
    except laplace.StabilityError:
        return NAN, NAN, NAN
    return mean, ph.p_serve_r, ph.p_serve_e


def point_seed(seed: int, index: int) -> int:
    """Seed of grid point ``index``; every discipline pair at that point shares it."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _stable(spec, kw) -> bool:
    load = kw["lambda_r"] / spec.lambda_e
    return not ((kw["buf_r"] is None and load >= 1) or (kw["buf_e"] is None and load <= 1))


def _sim_point(spec: SweepSpec, kw, pr, pe, seed):
    if not _stable(spec, kw):
        return (NAN,) * 6
    cr, ce = spec.curves()
    trace = sim.simulate(
        kw["lambda_r"], spec.lambda_e, kw["buf_r"], kw["buf_e"],
        sim.PolicySpec.from_names(pr, pe), spec.events, seed,
    )
    mean, err = sim.estimate_mean_fidelity(trace, cr, ce)
    ps = sim.estimate_service_probability(trace)
    pr_m, pr_s = ps.get("request", (NAN, NAN))
    pe_m, pe_s = ps.get("epr", (NAN, NAN))
    return mean, err, pr_m, pr_s, pe_m, pe_s


def _parallel(spec: SweepSpec, fn, jobs):
    workers = spec.workers or min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map keeps submission order whatever the completion order
        return list(pool.map(lambda job: fn(*job), jobs))


def _grid_jobs(spec: SweepSpec, with_seed: bool):
    index = {x: i for i, x in enumerate(spec.grid)}
    meta, jobs = [], []
    for x, label, kw, pr, pe in spec.points():
        meta.append((x, label))
        jobs.append((spec, kw, pr, pe, point_seed(spec.seed, index[x])) if with_seed else (spec, kw, pr, pe))
    return meta, jobs


def analyze_rows(spec: SweepSpec):
    meta, jobs = _grid_jobs(spec, with_seed=False)
    vals = _parallel(spec, _analytic_point, jobs)
    return [(x, label, *v) for (x, label), v in zip(meta, vals)]


def simulate_rows(spec: SweepSpec):
    meta, jobs = _grid_jobs(spec, with_seed=True)
    vals = _parallel(spec, _sim_point, jobs)
    return [(x, label, *v) for (x, label), v in zip(meta, vals)]


def repeater_rows(spec: SweepSpec, simulate: bool):
    disc = spec.pairs[0][0]
    jobs = [(mu, b) for mu in spec.grid for b in spec.buffers]

    def one(mu, b):
        rc = repeater.RepeaterConfig(mu, spec.gamma, b, disc)
        row = [mu, b, repeater.mean_infidelity(rc), repeater.p_serve(rc)]
        if simulate:
            m = repeater.to_double_queue(rc)
            seed = point_seed(spec.seed, spec.grid.index(mu))
            trace = sim.run(m.config, sim.PolicySpec.from_disciplines(m.disc_a, m.disc_b), spec.events, seed)
            mean, err = sim.estimate_mean_fidelity(trace, m.curve_a, m.curve_b)
            row += [1.0 - mean, err]
        return row

    return _parallel(spec, one, jobs)


ANALYZE_COLUMNS = ("x", "discipline_pair", "mean_fidelity", "p_serve_r", "p_serve_e")
SIMULATE_COLUMNS = (
    "x", "discipline_pair", "mean_fidelity", "mean_fidelity_stderr",
    "p_serve_r", "p_serve_r_stderr", "p_serve_e", "p_serve_e_stderr",
)
COMPARE_COLUMNS = (
    "x", "discipline_pair", "analytic", "simulated", "stderr", "abs_error", "tolerance", "status",
)
REPEATER_COLUMNS = ("mu", "buffer", "mean_infidelity", "p_serve")
REPEATER_SIM_COLUMNS = REPEATER_COLUMNS + ("sim_mean_infidelity", "sim_stderr")


def compare_rows(spec: SweepSpec, sigmas: float, floor: float):
    analytic = analyze_rows(spec)
    simulated = simulate_rows(spec)
    rows, breaches = [], 0
    for a, s in zip(analytic, simulated):
        x, label, fa = a[0], a[1], a[2]
        fs, err = s[2], s[3]
        if math.isnan(fa) or math.isnan(fs):
            rows.append((x, label, fa, fs, err, NAN, NAN, "unstable"))
            continue
        tol = max(floor, sigmas * err) if math.isfinite(err) else floor
        diff = abs(fa - fs)
        ok = diff <= tol
        breaches += not ok
        rows.append((x, label, fa, fs, err, diff, tol, "ok" if ok else "FAIL"))
    return rows, breaches


# ---- corrections evidence ---------------------------------------------------


def _alt_teleport_expansion(q: qmath.PureQubit, t1: float, t2: float, gamma: float) -> float:
    """Expansion with a ``(1+e2)/2`` leading weight and ``(a* b)^2`` cross terms.

    Kept only as a witness; the matrix pipeline disagrees with it.
    """
    a, b = q.alpha, q.beta
    a2, b2 = abs(a) ** 2, abs(b) ** 2
    e1, e2 = math.exp(-gamma * t1), math.exp(-2 * gamma * t2)
    cross = ((a.conjugate() * b) ** 2 - (b.conjugate() * a) ** 2).real
    return (
        (1 + e2) / 2 * (a2**2 + b2**2 + 2 * e1 * a2 * b2)
        + (1 - e2) / 6 * (4 * e1 * a2 * b2)
        + (1 - e2) / 6 * (a2**2 + b2**2 - e1 * cross)
    )


def _qubit_dependent_epr_curve(q: qmath.PureQubit, gamma: float) -> qmath.FidelityCurve:
    a, b = q.alpha, q.beta
    c = 1 + 2 * (abs(a) ** 2 * abs(b) ** 2 - ((a.conjugate() * b) ** 2).real - ((b.conjugate() * a) ** 2).real)
    return qmath.FidelityCurve((3 + c) / 6, (3 - c) / 6, 2 * gamma)


def errata_evidence(spec: SweepSpec, n_events: int = 200_000) -> list[str]:
    """Numeric witnesses separating the corrected formulas from the alternatives."""
    lam_e = spec.lambda_e
    lam_r = 0.5 * lam_e
    buf = spec.buffers[-1] if spec.buffers else (spec.buf_r or 10)
    lines = ["ERRATA evidence"]

    # 1. FIFO unbounded wait transform: sign of s
    trace = sim.simulate(lam_r, lam_e, None, 0, sim.PolicySpec.from_names("fifo", "fifo-po"), n_events, spec.seed)
    w = sim.wait_samples(trace, "request", "served")
    w = w[int(len(w) * sim.WARMUP_FRACTION):]
    lines.append(f"[fifo-unbounded transform] lambda_arr={lam_r:g} lambda_srv={lam_e:g}")
    for s in (0.1, 0.5, 1.0):
        plus = laplace.fifo_inf_laplace(lam_r, lam_e)(s)
        minus = laplace.fifo_inf_laplace_sign_flipped(lam_r, lam_e, s)
        quad = integrate.quad(lambda t: math.exp(-s * t) * laplace.fifo_inf_wait_pdf(lam_r, lam_e, t), 0, math.inf)[0]
        emp, err = sim.batch_means(np.exp(-s * w), warmup=0.0)
        lines.append(
            f"  s={s:g} plus_s={plus:.10f} minus_s={minus:.10f} quadrature={quad:.10f} "
            f"simulated={emp:.6f}+-{err:.1e} |plus-quad|={abs(plus - quad):.1e} |minus-quad|={abs(minus - quad):.1e}"
        )

    # 2. LIFO-PO position transforms
    s = max(spec.gamma, 0.01)
    closed = laplace.lifo_po_positions(buf, lam_r, lam_e, s)[1:-1]  # W(1..B)
    solved = laplace.lifo_po_recursion_solve(buf, lam_r, lam_e, s)
    unreduced = np.array([laplace.lifo_po_position_unreduced(buf, lam_r, lam_e, s, k) for k in range(1, buf)])
    lines.append(f"[lifo-po transform] B={buf} lambda_arr={lam_r:g} lambda_srv={lam_e:g} s={s:g}")
    lines.append(
        f"  W(1): closed={closed[0]:.12f} linear_solve={solved[0]:.12f} unreduced_ratio={unreduced[0]:.6g}"
    )
    lines.append(
        f"  max_k |closed-solve|={np.max(np.abs(closed - solved)):.1e} "
        f"max_k<B |unreduced-solve|={np.max(np.abs(unreduced - solved[:-1])):.3g}"
    )

    # 3. service probability of the pair phase
    cfg = markov.DoubleQueueConfig(lam_e, lam_r, buf, buf)
    rho_r, rho_e = markov.phase_loads(cfg)
    trace = sim.run(cfg, sim.PolicySpec.from_names("lifo-po", "lifo-po"), n_events, spec.seed)
    est = sim.estimate_service_probability(trace)["epr"]
    lines.append(f"[pair-phase service probability] load={cfg.load:g} B={buf}")
    lines.append(
        f"  own_phase_load={markov.service_probability(rho_e, buf):.6f} "
        f"request_load={markov.service_probability(rho_r, buf):.6f} simulated={est[0]:.6f}+-{est[1]:.1e}"
    )

    # 4. teleported fidelity
    p = qmath.DephasingParams(spec.gamma if spec.gamma > 0 else 0.01)
    q = qmath.PureQubit.from_angles(1.1, 0.7)
    lines.append(f"[teleported fidelity] gamma={p.gamma:g}")
    for qname, qq in (("plus", qmath.PLUS), ("theta=1.1,phi=0.7", q)):
        for t1, t2 in ((0.0, 30.0), (20.0, 10.0)):
            oracle = qmath.teleported_fidelity_matrix(qq, t1, t2, p)
            closed = qmath.teleported_fidelity(qq, t1, t2, p)
            alt = _alt_teleport_expansion(qq, t1, t2, p.gamma)
            lines.append(
                f"  {qname} t1={t1:g} t2={t2:g} matrix={oracle:.12f} closed={closed:.12f} "
                f"alternative={alt:.12f} |closed-matrix|={abs(closed - oracle):.1e}"
            )
    alt_curve = _qubit_dependent_epr_curve(q, p.gamma)
    oracle = qmath.teleported_fidelity_matrix(q, 0.0, 30.0, p)
    lines.append(
        f"  pair curve at t=30 for theta=1.1,phi=0.7: qubit_independent={qmath.curve_epr(q, p)(30.0):.12f} "
        f"qubit_dependent={float(alt_curve(30.0)):.12f} matrix={oracle:.12f}"
    )
    return lines


# ---- output -----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.12g}"


def render_csv(columns, rows) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def check_output(path: str) -> None:
    if path == "-":
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ValidationError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK):
        raise ValidationError(f"output directory {parent} is not writable")


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    if path == "-":
        sys.stdout.write(text)
        return
    parent = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".telesched-", dir=parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---- argument parsing -------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set for a standard sweep")
    p.add_argument("--config", help="key=value file; flags override it")
    g = p.add_argument_group("model")
    g.add_argument("--gamma", help="dephasing rate")
    g.add_argument("--lambda-e", dest="lambda_e", help="EPR pair generation rate")
    g.add_argument("--lambda-r", dest="lambda_r", help="request rate (ignored when sweeping load)")
    g.add_argument("--buf-e", dest="buf_e", help="pair buffer size, or inf")
    g.add_argument("--buf-r", dest="buf_r", help="request buffer size, or inf")
    g.add_argument("--disc-r", dest="disc_r", help="fifo, lifo, fifo-po, lifo-po, fifo-block, lifo-block")
    g.add_argument("--disc-e", dest="disc_e")
    g.add_argument("--pairs", help="comma list of disc_r/disc_e pairs")
    g.add_argument("--buffers", help="comma list of buffer sizes, one series each")
    g.add_argument("--theta", help="request qubit polar angle (default: |+>)")
    g.add_argument("--phi", help="request qubit azimuth")
    g = p.add_argument_group("grid")
    g.add_argument("--sweep", help="swept parameter: load, buffer (mu for repeater)")
    g.add_argument("--grid-min", dest="grid_min")
    g.add_argument("--grid-max", dest="grid_max")
    g.add_argument("--grid-points", dest="grid_points")
    g.add_argument("--grid-scale", dest="grid_scale", help="linear or log")
    g = p.add_argument_group("run")
    g.add_argument("--seed")
    g.add_argument("--events", help="arrivals per simulated point")
    g.add_argument("--workers", help="threads for grid points (0 = auto)")
    g.add_argument("-o", "--output", help="CSV path, - for stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telesched",
        description="Teleportation fidelity of a node with decohering buffers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze", help="analytic mean fidelity and service probabilities")
    _add_common(p)
    p = sub.add_parser("simulate", help="simulated estimates with batch-means errors")
    _add_common(p)
    p = sub.add_parser("compare", help="analytic vs simulated, exit 2 on a breach")
    _add_common(p)
    p.add_argument("--sigmas", type=float, default=3.0, help="tolerance in standard errors")
    p.add_argument("--floor", type=float, default=0.005, help="absolute tolerance floor")
    p.add_argument("--no-evidence", action="store_true", help="skip the corrections evidence section")
    p = sub.add_parser("repeater", help="single repeater infidelity over mu")
    _add_common(p)
    p.add_argument("--simulate", action="store_true", help="add simulated columns")
    p = sub.add_parser("trace", help="per-arrival CSV of one simulated run")
    _add_common(p)
    return parser


def resolve_settings(args: argparse.Namespace) -> dict[str, str]:
    settings = dict(DEFAULTS)
    if args.preset:
        settings.update(PRESETS[args.preset])
    if args.config:
        settings.update(read_config(args.config))
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = str(v)
    return settings


def _run(args) -> int:
    settings = resolve_settings(args)
    cmd = args.command
    if cmd == "trace":
        return _run_trace(settings)
    spec = build_spec(settings, cmd)
    check_output(spec.output)
    if cmd == "analyze":
        text = render_csv(ANALYZE_COLUMNS, analyze_rows(spec))
    elif cmd == "simulate":
        text = render_csv(SIMULATE_COLUMNS, simulate_rows(spec))
    elif cmd == "repeater":
        cols = REPEATER_SIM_COLUMNS if args.simulate else REPEATER_COLUMNS
        text = render_csv(cols, repeater_rows(spec, args.simulate))
    else:
        if args.sigmas <= 0 or args.floor < 0:
            raise ValidationError("--sigmas must be > 0 and --floor >= 0")
        rows, breaches = compare_rows(spec, args.sigmas, args.floor)
        text = render_csv(COMPARE_COLUMNS, rows)
        write_atomic(spec.output, text)
        report = [f"compare: {len(rows) - breaches}/{len(rows)} points within tolerance"]
        if not args.no_evidence:
            report += errata_evidence(spec)
        print("\n".join(report), file=sys.stderr if spec.output == "-" else sys.stdout)
        return EXIT_TOLERANCE if breaches else EXIT_OK
    write_atomic(spec.output, text)
    return EXIT_OK


def _run_trace(settings) -> int:
    try:
        lam_e = _float(settings, "lambda_e", positive=True)
        lam_r = _float(settings, "lambda_r", positive=True)
        pr, pe = _discipline_name(settings["disc_r"]), _discipline_name(settings["disc_e"])
        br = None if pr in laplace.ORDERS else _buffer(settings, "buf_r")
        be = None if pe in laplace.ORDERS else _buffer(settings, "buf_e")
        if br is None and be is None:
            raise ValidationError("at most one side may use an unbounded buffer")
        cfg = markov.DoubleQueueConfig(lam_e, lam_r, be, br)
        n, seed = _int(settings, "events", minimum=1), _int(settings, "seed", minimum=0)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    check_output(settings["output"])
    trace = sim.run(cfg, sim.PolicySpec.from_names(pr, pe), n, seed)
    write_atomic(settings["output"], trace.to_csv())
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except InvariantViolation as exc:
        print(f"telesched: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValidationError, ValueError) as exc:
        print(f"telesched: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
