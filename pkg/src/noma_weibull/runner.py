"""Parameter sweeps, analytic-versus-simulation validation and output files.

A sweep is described by an INI file; every section is one scenario and its
keys mirror :class:`SweepSpec`::

    [fig2]
    k = 0.8, 1.2, 1.6        ; lists of k, lam, m_tx, n_rx expand to a grid
    lam = 2
    m_tx = 3
    n_rx = 2
    betas = 0.01, 0.44, 0.55
    user_indices = 1, 3
    rho_db = 0, 40, 2.5      ; start, stop, step (stop included)
    gamma_db = 0             ; one value, or one per entry of user_indices
    mod_a = 1
    outputs = op_exact, op_asymp, mc

SNR values are given in dB and converted with ``10 ** (x / 10)``.
"""

import configparser
import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy import stats

from .exceptions import DomainError, EvaluationError
from .metrics import (
    DEFAULT_A_DAGGER,
    AberQuery,
    OutageQuery,
    aber_floor,
    aber_user1_asymptotic,
    evaluate_aber,
    outage_asymptotic,
    outage_exact,
)
from .montecarlo import SimulationPlan, run
from .series import (
    DEFAULT_MAX_TERMS,
    DEFAULT_TOL,
    DiversityConfig,
    WeibullParams,
    build_table,
    write_table_csv,
)
from .statistics import LinkContext, NomaAllocation, psi_from_chi

__all__ = [
    "SweepSpec",
    "SpecError",
    "OUTPUTS",
    "PRESETS",
    "db_to_linear",
    "load_specs",
    "load_preset",
    "run_sweep",
    "validate",
    "write_rows",
    "dump_coefficients",
]

OUTPUTS = ("op_exact", "op_asymp", "aber_exact", "aber_asymp", "aber_floor", "mc")
PRESETS = ("fig2", "fig3", "fig4", "fig5")
_Z99 = 2.5758293035489004
_OP_MIN = 1e-4
_TRUNCATION_RTOL = 1e-6


class SpecError(DomainError):
    """A sweep description is invalid or cannot produce any result."""


def db_to_linear(x_db):
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SweepSpec:
    """One scenario of a sweep."""

    name: str
    params: WeibullParams
    config: DiversityConfig
    alloc: NomaAllocation
    rho_db: tuple
    gamma_db: tuple
    mod_a: float
    user_indices: tuple
    outputs: frozenset
    mc_samples: int = 100_000
    seed: int = 0
    a_dagger: float = DEFAULT_A_DAGGER
    tol: float = DEFAULT_TOL
    max_terms: int = DEFAULT_MAX_TERMS
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        start, stop, step = self.rho_db
        if not step > 0 or stop < start:
            raise SpecError(f"{self.name}: rho_db needs start <= stop and step > 0")
        if not self.outputs:
            raise SpecError(f"{self.name}: no outputs selected")
        unknown = set(self.outputs) - set(OUTPUTS)
        if unknown:
            raise SpecError(f"{self.name}: unknown outputs {sorted(unknown)}")
        if not self.user_indices:
            raise SpecError(f"{self.name}: no users selected")
        for u in self.user_indices:
            self.alloc._check(u)
        if len(self.gamma_db) != len(self.user_indices):
            raise SpecError(f"{self.name}: gamma_db needs one value or one per user")
        if not self.mod_a > 0:
            raise SpecError(f"{self.name}: mod_a must be > 0")

    @property
    def rho_grid_db(self):
        start, stop, step = self.rho_db
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(count)]

    def gamma_for(self, user):
        return self.gamma_db[self.user_indices.index(user)]

    @property
    def wants_op(self):
        return bool({"op_exact", "op_asymp"} & self.outputs) or self.outputs == {"mc"}

    @property
    def wants_aber(self):
        return bool({"aber_exact", "aber_asymp", "aber_floor"} & self.outputs) or self.outputs == {"mc"}

    def columns(self):
        cols = ["scenario", "k", "lam", "m_tx", "n_rx", "user", "rho_db", "gamma_db"]
        mc = "mc" in self.outputs
        if self.wants_op:
            cols += [c for c in ("op_exact", "op_asymp") if c in self.outputs]
            if mc:
                cols += ["op_mc", "op_mc_stderr"]
        if self.wants_aber:
            if "aber_exact" in self.outputs:
                cols += ["aber_exact", "aber_method"]
            cols += [c for c in ("aber_asymp", "aber_floor") if c in self.outputs]
            if mc:
                cols += ["aber_mc", "aber_mc_stderr"]
        return cols + ["note"]


# ----------------------------------------------------------------------------
# configuration files
# ----------------------------------------------------------------------------

def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text):
    out = []
    for x in _floats(text):
        if x != int(x):
            raise SpecError(f"expected integers, got {text!r}")
        out.append(int(x))
    return out


def _section_specs(name, sec, overrides):
    get = sec.get
    try:
        ks = _floats(get("k"))
        lams = _floats(get("lam", fallback=get("lambda", fallback="")))
        m_txs = _ints(get("m_tx"))
        n_rxs = _ints(get("n_rx"))
        alloc = NomaAllocation(tuple(_floats(get("betas"))))
        rho = tuple(_floats(get("rho_db")))
        users = tuple(_ints(get("user_indices", fallback="1")))
        gammas = _floats(get("gamma_db", fallback="0"))
        outputs = frozenset(x.strip() for x in get("outputs", fallback="").split(",") if x.strip())
        mod_a = float(get("mod_a", fallback="1"))
        mc_samples = int(float(get("mc_samples", fallback="100000")))
        seed = int(get("seed", fallback="0"))
        a_dagger = float(get("a_dagger", fallback=str(DEFAULT_A_DAGGER)))
        tol = float(get("tol", fallback=str(DEFAULT_TOL)))
        max_terms = int(get("max_terms", fallback=str(DEFAULT_MAX_TERMS)))
    except (TypeError, ValueError) as exc:
        raise SpecError(f"section [{name}]: {exc}") from None
    if not ks or not lams or not m_txs or not n_rxs:
        raise SpecError(f"section [{name}] must define k, lam, m_tx and n_rx")
    if len(rho) != 3:
        raise SpecError(f"section [{name}]: rho_db must be 'start, stop, step'")
    if len(gammas) == 1:
        gammas = gammas * len(users)
    for key in ("a_dagger", "tol", "max_terms"):
        if overrides.get(key) is not None:
            value = overrides[key]
            if key == "a_dagger":
                a_dagger = value
            elif key == "tol":
                tol = value
            else:
                max_terms = value
    grid = list(itertools.product(ks, lams, m_txs, n_rxs))
    specs = []
    for k, lam, m, n in grid:
        label = name
        if len(grid) > 1:
            varied = []
            for key, values, v in (("k", ks, k), ("lam", lams, lam), ("m_tx", m_txs, m), ("n_rx", n_rxs, n)):
                if len(values) > 1:
                    varied.append(f"{key}={v:g}")
            label = f"{name}[{','.join(varied)}]"
        specs.append(SweepSpec(
            name=label, params=WeibullParams(k, lam), config=DiversityConfig(m, n), alloc=alloc,
            rho_db=rho, gamma_db=tuple(gammas), mod_a=mod_a, user_indices=users,
            outputs=outputs, mc_samples=mc_samples, seed=seed, a_dagger=a_dagger,
            tol=tol, max_terms=max_terms,
        ))
    return specs


def load_specs(source, **overrides):
    """Parse INI text or a file path into a list of :class:`SweepSpec`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if "\n" in source or "[" in source:
            parser.read_string(source)
        else:
            with open(source, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise SpecError(f"malformed configuration: {exc}") from None
    if not parser.sections():
        raise SpecError("configuration has no scenario sections")
    specs = []
    for name in parser.sections():
        specs.extend(_section_specs(name, parser[name], overrides))
    return specs


def load_preset(name, **overrides):
    """Specs of a bundled figure preset (``fig2`` ... ``fig5``)."""
    if name not in PRESETS and name != "rayleigh":
        raise SpecError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("noma_weibull.presets").joinpath(f"{name}.ini").read_text(encoding="utf-8")
    return load_specs(text, **overrides)


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

def _table_for(spec):
    """Coefficient table truncated at the largest envelope the sweep asks for."""
    ref = spec.params.lam
    for u in spec.user_indices:
        gamma = db_to_linear(spec.gamma_for(u))
        rho = db_to_linear(spec.rho_db[0])
        ctx = LinkContext(spec.params, spec.config, spec.alloc, rho, u)
        if gamma < ctx.snr_bound:
            ref = max(ref, psi_from_chi(ctx, gamma))
    return build_table(spec.params, spec.config, tol=spec.tol, max_terms=spec.max_terms, ref_psi=ref)


def _row_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _evaluate_row(spec, table, index, user, rho_db, samples=None, seed=None):
    gamma_db = spec.gamma_for(user)
    gamma = db_to_linear(gamma_db)
    ctx = LinkContext(spec.params, spec.config, spec.alloc, db_to_linear(rho_db), user)
    row = {
        "scenario": spec.name, "k": spec.params.k, "lam": spec.params.lam,
        "m_tx": spec.config.m_tx, "n_rx": spec.config.n_rx, "user": user,
        "rho_db": rho_db, "gamma_db": gamma_db,
    }
    notes = []
    supported = gamma < ctx.snr_bound
    if not supported:
        notes.append("threshold beyond SNR support")
    out = spec.outputs
    if spec.wants_op:
        oq = OutageQuery(ctx, gamma)
        if "op_exact" in out:
            try:
                row["op_exact"] = outage_exact(oq, table)
            except EvaluationError as exc:
                row["op_exact"] = math.nan
                notes.append(f"op_exact: {exc}")
        if "op_asymp" in out:
            row["op_asymp"] = outage_asymptotic(oq)[1] if supported and gamma > 0 else math.nan
    if spec.wants_aber:
        aq = AberQuery(ctx, spec.mod_a, spec.a_dagger)
        if "aber_exact" in out:
            try:
                ev = evaluate_aber(aq, table)
                row["aber_exact"], row["aber_method"] = ev.value, ev.method
                cut = ev.diagnostics.get("truncation_bound", 0.0)
                if cut > _TRUNCATION_RTOL * ev.value:
                    notes.append(f"a_dagger truncation may cost up to {cut:.1e}; raise a_dagger")
            except EvaluationError as exc:
                row["aber_exact"], row["aber_method"] = math.nan, "failed"
                notes.append(f"aber_exact: {exc}")
        floor = aber_floor(spec.alloc, user, spec.mod_a) if user >= 2 else math.nan
        if "aber_asymp" in out:
            row["aber_asymp"] = aber_user1_asymptotic(aq)[1] if user == 1 else floor
        if "aber_floor" in out:
            row["aber_floor"] = floor
    if "mc" in out or samples is not None:
        n = samples if samples is not None else spec.mc_samples
        base = spec.seed if seed is None else seed
        plan = SimulationPlan(ctx, n, _row_seed(base, index))
        res = run(plan, gamma, spec.mod_a)
        row["op_mc"], row["op_mc_stderr"] = res.op_estimate, res.op_stderr
        row["aber_mc"], row["aber_mc_stderr"] = res.aber_estimate, res.aber_stderr
        if user >= 2 and res.max_snr >= ctx.snr_bound:
            notes.append("simulated SNR reached the support bound")
    row["note"] = "; ".join(notes)
    return row


def _row_keys(spec):
    keys = []
    for rho_db in spec.rho_grid_db:
        for user in spec.user_indices:
            keys.append((user, rho_db))
    return keys


def run_sweep(spec, workers=1, table=None):
    """Evaluate every (rho, user) row of ``spec``.

    Returns
    -------
    (list of str, list of dict)
        Column names and rows in deterministic order.

    Raises
    ------
    SpecError
        If no row satisfies the SNR support rule ``gamma < beta_u/theta_u``.
    """
    keys = _row_keys(spec)
    if all(db_to_linear(spec.gamma_for(u)) >= spec.alloc.snr_bound(u) for u, _ in keys):
        raise SpecError(f"{spec.name}: every threshold lies beyond the SNR support of its user")
    if table is None:
        table = _table_for(spec)

    def work(item):
        index, (user, rho_db) = item
        return _evaluate_row(spec, table, index, user, rho_db)

    items = list(enumerate(keys))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, items))
    else:
        rows = [work(item) for item in items]
    return spec.columns(), rows


# ----------------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------------

def validate(spec, samples, seed, corrupt=None):
    """Compare analytic results with simulation for every row of ``spec``.

    Outage rows pass when the empirical outage lies within the binomial
    interval around the analytic value (rows with analytic outage below 1e-4
    are skipped); ABER rows pass when the semi-analytic simulation is within
    ``z`` standard errors of the analytic ABER.  ``z`` is chosen so that the
    whole report has a 1% false-failure rate (Bonferroni over all checks),
    but never below 2.576 for outage (99% per row) or 3 for ABER.

    ``corrupt = (index, factor)`` scales one series coefficient before the
    comparison (fault injection).

    Returns
    -------
    dict
        JSON-ready report with a ``passed`` flag.
    """
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise SpecError(f"samples must be a positive integer, got {samples!r}")
    table = _table_for(spec)
    if corrupt is not None:
        table = table.with_xi_scaled(*corrupt)
    keys = _row_keys(spec)
    z = _family_z(len(keys) * (int(spec.wants_op) + int(spec.wants_aber)))
    checks = []
    for index, (user, rho_db) in enumerate(keys):
        sub = replace(spec, outputs=frozenset(
            (["op_exact"] if spec.wants_op else []) + (["aber_exact"] if spec.wants_aber else [])
        ))
        row = _evaluate_row(sub, table, index, user, rho_db, samples=samples, seed=seed)
        base = {"scenario": spec.name, "row": index, "user": user, "rho_db": rho_db}
        if spec.wants_op:
            checks.append(dict(base, **_op_check(row, samples, max(z, _Z99))))
        if spec.wants_aber:
            checks.append(dict(base, **_aber_check(row, max(z, 3.0))))
    return {
        "scenario": spec.name,
        "samples": samples,
        "seed": seed,
        "corrupted": list(corrupt) if corrupt is not None else None,
        "checks": checks,
        "passed": all(c["status"] != "fail" for c in checks),
    }


def _family_z(count, level=0.01):
    """Two-sided normal quantile for ``count`` simultaneous checks."""
    return float(stats.norm.isf(level / (2 * max(count, 1))))


def _op_check(row, n, z):
    p, emp = row.get("op_exact", math.nan), row["op_mc"]
    out = {"metric": "op", "analytic": p, "empirical": emp}
    if math.isnan(p):
        return dict(out, status="fail", reason=row["note"] or "analytic value unavailable")
    if p >= 1.0:
        ok = emp == 1.0
        return dict(out, tolerance=0.0, status="pass" if ok else "fail")
    if p < _OP_MIN:
        return dict(out, status="skip", reason="analytic outage below 1e-4")
    half = z * math.sqrt(p * (1 - p) / n)
    return dict(out, z=z, tolerance=half, status="pass" if abs(emp - p) <= half else "fail")


def _aber_check(row, z):
    p, emp, se = row.get("aber_exact", math.nan), row["aber_mc"], row["aber_mc_stderr"]
    out = {"metric": "aber", "analytic": p, "empirical": emp, "method": row.get("aber_method")}
    if math.isnan(p):
        return dict(out, status="fail", reason=row["note"] or "analytic value unavailable")
    half = z * se
    if row["note"]:
        out["note"] = row["note"]
    return dict(out, z=z, tolerance=half, status="pass" if abs(emp - p) <= half else "fail")


# ----------------------------------------------------------------------------
# output
# ----------------------------------------------------------------------------

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_rows(columns, rows, fmt="csv"):
    """Render rows as CSV (NaN cells empty) or JSON text."""
    if fmt == "json":
        data = [{c: _json_safe(r.get(c)) for c in columns} for r in rows]
        return json.dumps(data, indent=2, sort_keys=False) + "\n"
    if fmt != "csv":
        raise SpecError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def report_json(reports):
    """Deterministic JSON text for a list of validation reports."""
    return json.dumps(_json_safe(reports), indent=2, sort_keys=True) + "\n"


def dump_coefficients(spec):
    """CSV text of the coefficient table used for ``spec``."""
    return write_table_csv(_table_for(spec))
