"""Parameter sweeps, manufactured loads, and table rendering.

A sweep is described by a ``SweepConfig``, executed point by point with
``run_sweep`` (each point assembles its system, solves it with preconditioned
MinRes, and optionally estimates the preconditioned condition number), and
rendered with ``emit_table`` as CSV, JSON, or nested markdown tables.
"""

import concurrent.futures
import csv
import io
import itertools
import json
import time
import warnings

import numpy as np

from .forms import CoefficientField, assemble_load
from .krylov import estimate_condition, minres
from .mesh import build_unit_square, locate_region
from .systems import (
    BiotParams,
    build_biot_solid_pressure,
    build_biot_total_pressure,
    build_ex1,
    build_ex2,
)

CASES = ("1", "2", "3", "4", "ex1", "ex2a", "ex2b", "ex3")
LAYOUTS = ("Table1", "Table2_3", "Table4", "Table6", "Table7", "Table8", "Flat")
FORMATS = ("csv", "json", "md")

# Horizontal band where a region-spec kappa takes its inner value; kappa = 1
# on the rest of the domain.
BAND_RECT = (0.0, 1.0, 0.25, 0.75)

# case id -> (boundary preset, element pair, preconditioner variant)
CASE_SETUP = {
    "1": ("left_open", "taylor_hood", "GeneralBC"),
    "2": ("all_dirichlet", "taylor_hood", "DirichletBC"),
    "3": ("all_dirichlet", "taylor_hood", "GeneralBC"),
    "4": ("left_open", "mini", "GeneralBC"),
}

# Axes a case actually sweeps; the others must stay at their defaults.
CASE_AXES = {
    "1": ("lambda", "alpha", "kappa"),
    "2": ("lambda", "alpha", "kappa"),
    "3": ("lambda", "alpha", "kappa"),
    "4": ("lambda", "alpha", "kappa"),
    "ex1": ("kappa",),
    "ex2a": ("lambda",),
    "ex2b": ("lambda",),
    "ex3": ("lambda", "kappa"),
}

COLUMNS = (
    "case",
    "N",
    "lam",
    "alpha",
    "kappa",
    "kappa_band",
    "iterations",
    "converged",
    "cond_estimate",
    "wall_time_ms",
    "dof_count",
    "error",
)


def _as_kappa_entry(entry):
    """Normalize a kappa entry to (inner_value, is_band)."""
    if isinstance(entry, (tuple, list)):
        if len(entry) != 2 or entry[0] != "band":
            raise ValueError("kappa region spec must be ('band', inner_value)")
        return float(entry[1]), True
    return float(entry), False


class SweepConfig:
    """Validated description of one parameter sweep.

    Parameters
    ----------
    case : str
        One of "1", "2", "3", "4" (three-field flow variants), "ex1"
        (perturbed Stokes), "ex2a"/"ex2b" (mixed elasticity with plain or
        rank-one pressure preconditioner), "ex3" (solid-pressure control).
    N_list : list of int
        Mesh subdivisions.
    lambda_list, alpha_list, kappa_list : list, optional
        Parameter axes; axes a case does not sweep must be left at their
        one-element defaults.  A kappa entry is a positive constant or a
        ("band", inner) pair placing `inner` on the horizontal mid band.
    rtol : float
        MinRes relative tolerance on the preconditioned residual ratio.
    max_iter : int
        Iteration cap.
    estimate_cond : bool
        Also run the Lanczos condition estimate per point.
    seed : int
        0 selects the smooth deterministic load; positive values select a
        seeded random load.
    allow_out_of_range : bool
        Accept parameters outside the admissible ranges (they then only
        warn at assembly).
    workers : int
        Worker pool size; results are ordered by grid index regardless.
    """

    def __init__(
        self,
        case,
        N_list,
        lambda_list=None,
        alpha_list=None,
        kappa_list=None,
        rtol=1e-6,
        max_iter=5000,
        estimate_cond=False,
        seed=0,
        allow_out_of_range=False,
        workers=1,
    ):
        if case not in CASES:
            raise ValueError("unknown case %r (choices: %s)" % (case, ", ".join(CASES)))
        self.case = case
        self.N_list = [int(N) for N in N_list]
        self.lambda_list = [float(v) for v in (lambda_list or [1.0])]
        self.alpha_list = [float(v) for v in (alpha_list or [1.0])]
        self.kappa_list = [_as_kappa_entry(v) for v in (kappa_list or [1.0])]
        self.rtol = float(rtol)
        self.max_iter = int(max_iter)
        self.estimate_cond = bool(estimate_cond)
        self.seed = int(seed)
        self.allow_out_of_range = bool(allow_out_of_range)
        self.workers = int(workers)
        self._validate()

    def _validate(self):
        for name, values in (
            ("N_list", self.N_list),
            ("lambda_list", self.lambda_list),
            ("alpha_list", self.alpha_list),
            ("kappa_list", self.kappa_list),
        ):
            if not values:
                raise ValueError("%s must be nonempty" % name)
        if any(N < 1 for N in self.N_list):
            raise ValueError("N must be >= 1")
        if self.rtol <= 0.0 or self.max_iter < 1 or self.workers < 1:
            raise ValueError("rtol, max_iter and workers must be positive")
        axes = CASE_AXES[self.case]
        if "lambda" not in axes and len(self.lambda_list) > 1:
            raise ValueError("case %s does not sweep lambda" % self.case)
        if "alpha" not in axes and len(self.alpha_list) > 1:
            raise ValueError("case %s does not sweep alpha" % self.case)
        if "kappa" not in axes and len(self.kappa_list) > 1:
            raise ValueError("case %s does not sweep kappa" % self.case)
        if self.case == "ex1":
            if any(band for _, band in self.kappa_list):
                raise ValueError("the perturbed Stokes case needs constant kappa")
            if any(k < 0 for k, _ in self.kappa_list):
                raise ValueError("kappa must be nonnegative")
        if self.allow_out_of_range:
            return
        if self.case in CASE_SETUP or self.case in ("ex2a", "ex2b", "ex3"):
            if any(lam < 1.0 for lam in self.lambda_list):
                raise ValueError(
                    "lambda < 1 is outside the admissible range "
                    "(pass allow_out_of_range to sweep it anyway)"
                )
        if self.case in CASE_SETUP:
            if any(not 0.0 < a <= 1.0 for a in self.alpha_list):
                raise ValueError("alpha must lie in (0, 1]")
            if any(not 0.0 < k <= 1.0 for k, _ in self.kappa_list):
                raise ValueError("kappa must lie in (0, 1]")
        if self.case == "ex3":
            if any(not 0.0 < k <= 1.0 for k, _ in self.kappa_list):
                raise ValueError("kappa must lie in (0, 1]")

    @staticmethod
    def from_dict(data):
        """Build a config from a flat dict (the JSON config file format)."""
        known = {
            "case",
            "N_list",
            "lambda_list",
            "alpha_list",
            "kappa_list",
            "rtol",
            "max_iter",
            "estimate_cond",
            "seed",
            "allow_out_of_range",
            "workers",
        }
        extra = set(data) - known
        if extra:
            raise ValueError("unknown config fields: %s" % ", ".join(sorted(extra)))
        if "case" not in data or "N_list" not in data:
            raise ValueError("config needs at least 'case' and 'N_list'")
        return SweepConfig(**data)

    def grid(self):
        """Grid points in sweep order: N outermost, then lambda, alpha, kappa."""
        return list(
            itertools.product(
                self.N_list, self.lambda_list, self.alpha_list, self.kappa_list
            )
        )


def build_case_system(case, N, lam=1.0, alpha=1.0, kappa=1.0, kappa_band=False):
    """Assemble the system of one sweep point.

    Parameters
    ----------
    case : str
        Case identifier, see SweepConfig.
    N : int
        Mesh subdivisions.
    lam, alpha : float
        Parameters; ignored by cases that do not use them.
    kappa : float
        Constant kappa, or the inner band value when kappa_band is set.
    kappa_band : bool
        Place kappa on the horizontal mid band with 1 outside.

    Returns
    -------
    BlockSystem
    """
    if case in CASE_SETUP:
        preset, element, precond = CASE_SETUP[case]
        mesh = build_unit_square(N, preset)
        field = _kappa_field(mesh, kappa, kappa_band)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params = BiotParams(lam, alpha, field)
        return build_biot_total_pressure(mesh, element, params, precond)
    if case == "ex1":
        mesh = build_unit_square(N, "all_dirichlet")
        return build_ex1(mesh, kappa)
    if case in ("ex2a", "ex2b"):
        mesh = build_unit_square(N, "all_dirichlet")
        return build_ex2(mesh, lam, "B1" if case == "ex2a" else "B2")
    if case == "ex3":
        mesh = build_unit_square(N, "left_open")
        field = _kappa_field(mesh, kappa, kappa_band)
        return build_biot_solid_pressure(mesh, lam, field)
    raise ValueError("unknown case %r" % case)


def _kappa_field(mesh, kappa, kappa_band):
    if not kappa_band:
        return float(kappa)
    values = np.ones(mesh.num_cell)
    values[locate_region(mesh, BAND_RECT)] = kappa
    return CoefficientField(cell_values=values)


def manufactured_rhs(system, seed=0):
    """Deterministic load vector with unit preconditioner norm.

    Seed 0 assembles the smooth loads f = (sin(pi x) sin(pi y),
    x y (1-x)(1-y)) on the displacement field and g = sin(pi x) y on the
    last scalar field; middle fields get zero.  A positive seed replaces
    them with a seeded random vector.  The result is masked on constrained
    coordinates, each nonzero field is scaled to a weight in the
    preconditioner inner product proportional to its number of value
    components (otherwise the field with the stiffest inverse block
    swallows the convergence criterion at extreme parameters and
    iteration counts collapse), the known null vectors are projected
    out, and the total is scaled so that (B rhs, rhs) = 1.

    Parameters
    ----------
    system : BlockSystem
    seed : int

    Returns
    -------
    ndarray
    """
    if seed == 0:
        rhs = np.zeros(system.n)
        a, b = system.field_offsets[0]
        rhs[a:b] = assemble_load(
            system.spaces[0],
            lambda x, y: (np.sin(np.pi * x) * np.sin(np.pi * y),
                          x * y * (1 - x) * (1 - y)),
        )
        a, b = system.field_offsets[-1]
        rhs[a:b] = assemble_load(
            system.spaces[-1], lambda x, y: np.sin(np.pi * x) * y
        )
    else:
        rng = np.random.default_rng(seed)
        rhs = rng.standard_normal(system.n)
    rhs = rhs * system.free_mask
    balanced = np.zeros_like(rhs)
    for space, (a, b) in zip(system.spaces, system.field_offsets):
        part = np.zeros_like(rhs)
        part[a:b] = rhs[a:b]
        weight = part @ system.precond(part)
        if weight > 0.0:
            balanced += space.value_dim * part / np.sqrt(weight)
    for null in system.null_vectors:
        balanced = balanced - (null @ balanced) * null
    scale = np.sqrt(balanced @ system.precond(balanced))
    if scale == 0.0:
        raise ValueError("manufactured load vanished after projection")
    return balanced / scale


def _run_point(config, point):
    N, lam, alpha, (kappa, band) = point
    row = {
        "case": config.case,
        "N": N,
        "lam": lam,
        "alpha": alpha,
        "kappa": kappa,
        "kappa_band": band,
        "iterations": None,
        "converged": False,
        "cond_estimate": None,
        "wall_time_ms": None,
        "dof_count": None,
        "error": None,
    }
    start = time.perf_counter()
    try:
        system = build_case_system(config.case, N, lam, alpha, kappa, band)
        rhs = manufactured_rhs(system, config.seed)
        _, report = minres(
            system.mat, system.precond, rhs, rtol=config.rtol, max_iter=config.max_iter
        )
        row["iterations"] = report.iterations
        row["converged"] = bool(report.converged)
        row["dof_count"] = system.n
        if config.estimate_cond:
            cond, _ = estimate_condition(
                system.mat,
                system.precond,
                drop_null=system.drop_null,
                probe_mask=system.free_mask,
            )
            row["cond_estimate"] = cond
    except Exception as exc:
        row["error"] = "%s: %s" % (type(exc).__name__, exc)
    row["wall_time_ms"] = 1e3 * (time.perf_counter() - start)
    return row


def run_sweep(config):
    """Solve every grid point of a sweep.

    Points run independently (in a worker pool when config.workers > 1);
    the returned rows follow grid order.  A failing point is recorded in
    its row's ``error`` field and never aborts the sweep.

    Parameters
    ----------
    config : SweepConfig

    Returns
    -------
    list of dict
        One row per grid point with the COLUMNS keys.
    """
    points = config.grid()
    if config.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(config.workers) as pool:
            return list(pool.map(lambda p: _run_point(config, p), points))
    return [_run_point(config, p) for p in points]


def _fmt_param(value):
    return "%g" % value


def _fmt_cell(row):
    if row is None:
        return "—"
    if row["error"] is not None:
        return "err"
    iters = row["iterations"]
    text = "%d" % iters if iters is not None else "—"
    if not row["converged"]:
        text += "*"
    if row["cond_estimate"] is not None:
        text += " (%.3g)" % row["cond_estimate"]
    return text


def _fmt_cond_cell(row):
    if row is None:
        return "—"
    if row["error"] is not None:
        return "err"
    if row["cond_estimate"] is not None:
        return "%.3g" % row["cond_estimate"]
    return _fmt_cell(row)


def _markdown_table(header, body):
    lines = ["| " + " | ".join(header) + " |"]
    lines.append("|" + "|".join(" --- " for _ in header) + "|")
    for cells in body:
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _unique(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def _nested_markdown(rows, row_axes, col_axis, cell):
    """Markdown table with nested row labels and one parameter as columns."""
    col_values = _unique([row[col_axis] for row in rows])
    key_of = lambda row: tuple(row[a] for a in row_axes)
    row_keys = _unique([key_of(row) for row in rows])
    lookup = {}
    for row in rows:
        lookup[key_of(row) + (row[col_axis],)] = row
    header = list(row_axes) + ["%s=%s" % (col_axis, _fmt_param(v)) for v in col_values]
    body = []
    previous = None
    for key in row_keys:
        labels = []
        for i, value in enumerate(key):
            same = previous is not None and previous[: i + 1] == key[: i + 1]
            if isinstance(value, float):
                labels.append("" if same else _fmt_param(value))
            else:
                labels.append("" if same else str(value))
        cells = [cell(lookup.get(key + (v,))) for v in col_values]
        body.append(labels + cells)
        previous = key
    return _markdown_table(header, body)


def emit_table(rows, format="md", layout="Flat"):
    """Render sweep rows as text.

    Parameters
    ----------
    rows : list of dict
        Output of run_sweep.
    format : str
        "csv" and "json" are always flat; "md" honors the layout.
    layout : str
        "Flat" or one of the nested table layouts (Table1, Table2_3,
        Table4, Table6, Table7, Table8).  Missing grid cells render as an
        em dash.

    Returns
    -------
    str
    """
    if layout not in LAYOUTS:
        raise ValueError("unknown layout %r (choices: %s)" % (layout, ", ".join(LAYOUTS)))
    if format not in FORMATS:
        raise ValueError("unknown format %r (choices: %s)" % (format, ", ".join(FORMATS)))
    if format == "json":
        return json.dumps(rows, indent=2) + "\n"
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return buffer.getvalue()
    if layout == "Flat":
        header = list(COLUMNS)
        body = [
            ["" if row[c] is None else str(row[c]) for c in COLUMNS] for row in rows
        ]
        return _markdown_table(header, body)
    if layout == "Table1":
        return _nested_markdown(rows, ["N"], "kappa", _fmt_cond_cell)
    if layout in ("Table2_3", "Table4"):
        return _nested_markdown(rows, ["N"], "lam", _fmt_cell)
    if layout == "Table6":
        return _nested_markdown(rows, ["N", "lam", "alpha"], "kappa", _fmt_cell)
    if layout == "Table7":
        def iters_only(row):
            if row is None:
                return "—"
            if row["error"] is not None:
                return "err"
            text = "%d" % row["iterations"] if row["iterations"] is not None else "—"
            if not row["converged"]:
                text += "*"
            return text

        return _nested_markdown(rows, ["N", "lam", "alpha"], "kappa", iters_only)
    # Table8: band sweeps nest alpha above lambda, columns are inner kappa.
    return _nested_markdown(rows, ["N", "alpha", "lam"], "kappa", _fmt_cell)
