"""
Experiment plumbing: flat key=value configuration, SNR sweeps, figure
recipes and deterministic CSV/JSON emission.

Every output file starts with the fully resolved configuration, so an
output file can itself be passed back as ``--config`` to reproduce it.
"""

import csv
import difflib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .beamforming import SCHEMES
from .channel import STREAM_SAMPLER, CmiMode, SystemConfig, make_rng
from .errors import ConfigurationError
from .evaluation import run_trials, summarize
from .leakage import cdf_D, cdf_V, simulate_zf_leakage

log = logging.getLogger(__name__)

OUTPUT_MARKER = "leakbeam-output"
FORMATS = ("csv", "json")

# ---------------------------------------------------------------------------
# Keys and value parsing
# ---------------------------------------------------------------------------


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text):
    return tuple(float(v) for v in text.replace(" ", "").split(",") if v)


def _parse_names(text):
    return tuple(v.strip().lower() for v in text.split(",") if v.strip())


def parse_grid(text):
    """Parse ``"0:5:30"``, ``"10,20"`` or mixes of both into a list of floats.

    ``a:b:c`` is an inclusive range from ``a`` to ``c`` in steps of ``b``.
    """
    values = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) == 1:
            values.append(float(parts[0]))
        elif len(parts) == 3:
            start, step, stop = map(float, parts)
            if step == 0 or (stop - start) / step < 0:
                raise ValueError(f"empty range {item!r}")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            values.extend(start + i * step for i in range(n))
        else:
            raise ValueError(f"expected a value or start:step:stop, got {item!r}")
    if not values:
        raise ValueError("empty grid")
    return tuple(values)


def _parse_pairs(text):
    pairs = []
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        n, b = item.split(":")
        pairs.append((int(n), int(b)))
    if not pairs:
        raise ValueError("empty list of N:B pairs")
    return tuple(pairs)


def _fmt_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, CmiMode):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ",".join(f"{a}:{b}" for a, b in v)
        return ",".join(_fmt_value(x) for x in v)
    return "" if v is None else str(v)


SYSTEM_KEYS = {
    "N": int, "K": int, "B": int, "M": int,
    "cmi_mode": CmiMode, "alpha": _parse_floats, "xi": _parse_floats,
    "N0": float, "delta": float, "L_rand": int, "epsilon": float, "L_algo1": int,
    "seed": int, "fixed_codebook": _parse_bool, "allow_low_delta": _parse_bool,
    "plc_gamma": float, "plc_p": float, "gp_max_iter": int,
}

EXPERIMENT_KEYS = {
    "schemes": _parse_names, "snr_db": parse_grid, "trials": int, "format": str,
    "recipe": str, "workers": int, "cdf_pairs": _parse_pairs, "cdf_samples": int,
    "cdf_points": int,
}

ALL_KEYS = {**SYSTEM_KEYS, **EXPERIMENT_KEYS}


def _unknown_key_error(key):
    hint = difflib.get_close_matches(key, list(ALL_KEYS), n=3, cutoff=0.5)
    msg = f"unknown configuration key {key!r}"
    if hint:
        msg += f"; did you mean {', '.join(repr(h) for h in hint)}?"
    return ConfigurationError(msg)


def parse_value(key, text):
    """Convert the text of one configuration entry, naming the key on failure."""
    if key not in ALL_KEYS:
        raise _unknown_key_error(key)
    try:
        return ALL_KEYS[key](text.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"bad value for {key!r}: {text.strip()!r} ({exc})") from None


def parse_config_text(text):
    """Read flat ``key = value`` lines; ``#`` starts a comment.

    A file written by :func:`write_output` is recognized by its marker and
    its embedded configuration is read back instead.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        meta = doc.get("metadata", {})
        return {k: parse_value(k, v) for k, v in meta.get("config", {}).items()}
    lines = text.splitlines()
    if lines and lines[0].strip() == f"# {OUTPUT_MARKER}":
        lines = [ln[2:] for ln in lines if ln.startswith("# ") and "=" in ln]
        lines = [ln for ln in lines if ln.split("=", 1)[0].strip() in ALL_KEYS]
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key] = parse_value(key, value)
    return out


# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    label: str
    overrides: dict = field(default_factory=dict)
    perfect: bool = False
    schemes: tuple = None       # restrict to these schemes (None = all)


FULL_SNR = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
DEFAULT_PAIRS = ((2, 2), (2, 4), (4, 4), (4, 6))

RECIPES = {
    "fig2": {"kind": "cdf", "quantity": "D"},
    "fig3": {"kind": "cdf", "quantity": "V"},
    "fig4": {"kind": "rate",
             "defaults": {"schemes": ("zf", "slnr", "aslnr", "plc", "malc", "ralc"),
                          "snr_db": FULL_SNR}},
    "fig5": {"kind": "gp",
             "defaults": {"schemes": ("malc-pa", "ralc-pa"), "snr_db": (10.0, 20.0),
                          "L_algo1": 1}},
    "fig6": {"kind": "algo",
             "defaults": {"schemes": ("malc-pa", "ralc-pa"), "snr_db": (10.0, 20.0),
                          "L_algo1": 10}},
    "fig7": {"kind": "rate",
             "defaults": {"schemes": ("zf-pa", "malc-pa", "ralc-pa"), "snr_db": FULL_SNR,
                          "L_algo1": 10},
             "variants": (Variant("cmi=average", {"cmi_mode": CmiMode.AVERAGE}),
                          Variant("cmi=2bit", {"cmi_mode": CmiMode.QUANTIZED, "M": 2}),
                          Variant("cmi=perfect", {"cmi_mode": CmiMode.PERFECT}))},
    "fig8": {"kind": "rate",
             "defaults": {"schemes": ("zf-pa", "malc-pa", "ralc-pa"), "snr_db": FULL_SNR,
                          "L_algo1": 3},
             "variants": (Variant("B=6", {"B": 6}),
                          Variant("B=12", {"B": 12}),
                          Variant("csi=perfect", perfect=True, schemes=("zf-pa",)))},
}

BASE_DEFAULTS = {"snr_db": (20.0,), "trials": 500, "format": "csv", "workers": 1,
                 "cdf_pairs": DEFAULT_PAIRS, "cdf_samples": 100000, "cdf_points": 101}

COLUMNS = {
    "rate": ("scheme", "variant", "snr_db", "n_trials", "mean_rate", "ci_halfwidth",
             "mean_gp_iterations", "mean_outer_iterations", "mean_surrogate",
             "audit_failures"),
    "cdf": ("quantity", "N", "B", "x", "analytical", "empirical"),
    "gp": ("scheme", "snr_db", "iteration", "mean_pd", "mean_pd_db", "active_trials",
           "converged_fraction"),
    "algo": ("scheme", "snr_db", "L_algo1", "mean_perf_metric"),
}


# ---------------------------------------------------------------------------
# Experiment specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig
    schemes: tuple
    snr_db_grid: tuple
    n_trials: int
    output_path: object = None
    output_format: str = "csv"
    recipe: str = None
    workers: int = 1
    cdf_pairs: tuple = DEFAULT_PAIRS
    cdf_samples: int = 100000
    cdf_points: int = 101
    command: str = "run"

    @property
    def kind(self):
        return RECIPES[self.recipe]["kind"] if self.recipe else "rate"

    def resolved(self):
        """All keys with their effective values, in a fixed order.

        The worker count is left out: it never changes the numbers.
        """
        out = {}
        for key in SYSTEM_KEYS:
            out[key] = _fmt_value(getattr(self.config, key))
        out.update({
            "schemes": _fmt_value(self.schemes), "snr_db": _fmt_value(self.snr_db_grid),
            "trials": str(self.n_trials), "format": self.output_format,
            "recipe": self.recipe or "",
            "cdf_pairs": _fmt_value(self.cdf_pairs), "cdf_samples": str(self.cdf_samples),
            "cdf_points": str(self.cdf_points),
        })
        return out


def build_spec(file_values=None, flag_values=None, command="run", output_path=None):
    """Merge defaults < recipe < config file < flags into an ExperimentSpec."""
    file_values = dict(file_values or {})
    flag_values = {k: v for k, v in (flag_values or {}).items() if v is not None}
    for source in (file_values, flag_values):
        for key in source:
            if key not in ALL_KEYS:
                raise _unknown_key_error(key)
    values = dict(BASE_DEFAULTS)
    recipe = flag_values.get("recipe", file_values.get("recipe")) or None
    if command == "cdf" and recipe is None:
        recipe = "fig3"
    if recipe is not None:
        if recipe not in RECIPES:
            raise ConfigurationError(
                f"unknown recipe {recipe!r}; valid: {', '.join(RECIPES)}")
        if command == "cdf" and RECIPES[recipe]["kind"] != "cdf":
            raise ConfigurationError("the cdf command takes recipe fig2 or fig3")
        values.update(RECIPES[recipe].get("defaults", {}))
    values.update(file_values)
    values.update(flag_values)
    values["recipe"] = recipe

    fmt = values["format"]
    if fmt not in FORMATS:
        raise ConfigurationError(f"bad value for 'format': {fmt!r}; valid: csv, json")
    schemes = tuple(values.get("schemes", ()))
    kind = RECIPES[recipe]["kind"] if recipe else "rate"
    if kind != "cdf":
        if not schemes:
            raise ConfigurationError(
                f"no schemes given; choose from {', '.join(SCHEMES)}")
        bad = [s for s in schemes if s not in SCHEMES]
        if bad:
            raise ConfigurationError(
                f"unknown scheme(s) {', '.join(bad)}; valid: {', '.join(SCHEMES)}")
    if values["trials"] < 1:
        raise ConfigurationError("'trials' must be at least 1")
    if values["workers"] < 1:
        raise ConfigurationError("'workers' must be at least 1")
    if values["cdf_samples"] < 2 or values["cdf_points"] < 2:
        raise ConfigurationError("'cdf_samples' and 'cdf_points' must be at least 2")

    sys_kw = {k: values[k] for k in SYSTEM_KEYS if k in values}
    K = sys_kw.get("K", SystemConfig.K)
    for name in ("alpha", "xi"):
        if name not in sys_kw and K != len(getattr(SystemConfig, name)):
            sys_kw[name] = (1.0,) * K
    N = sys_kw.get("N", SystemConfig.N)
    grid = tuple(values["snr_db"])
    P = 10.0 ** (grid[0] / 10.0) * sys_kw.get("N0", SystemConfig.N0)
    sys_kw["P_n"] = (P / N,) * N
    config = SystemConfig(**sys_kw)
    return ExperimentSpec(
        config=config, schemes=schemes, snr_db_grid=grid, n_trials=int(values["trials"]),
        output_path=output_path, output_format=fmt, recipe=recipe,
        workers=int(values["workers"]), cdf_pairs=tuple(values["cdf_pairs"]),
        cdf_samples=int(values["cdf_samples"]), cdf_points=int(values["cdf_points"]),
        command=command)


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _variants(spec):
    if spec.recipe and "variants" in RECIPES[spec.recipe]:
        return RECIPES[spec.recipe]["variants"]
    return (Variant(""),)


def _rate_rows(spec):
    rows = []
    for variant in _variants(spec):
        base = spec.config.replace(**variant.overrides) if variant.overrides else spec.config
        for scheme in spec.schemes:
            if variant.schemes is not None and scheme not in variant.schemes:
                continue
            for snr in spec.snr_db_grid:
                cfg = base.with_snr(snr)
                log.info("%s %s at %g dB: %d trials", scheme, variant.label, snr, spec.n_trials)
                results = run_trials(scheme, cfg, range(spec.n_trials), spec.workers,
                                     variant.perfect)
                agg = summarize(scheme, cfg, results)
                rows.append({
                    "scheme": scheme, "variant": variant.label, "snr_db": float(snr),
                    "n_trials": agg.n_trials, "mean_rate": agg.mean_rate,
                    "ci_halfwidth": agg.ci_halfwidth,
                    "mean_gp_iterations": agg.mean_gp_iterations,
                    "mean_outer_iterations": agg.mean_outer_iterations,
                    "mean_surrogate": agg.mean_surrogate,
                    "audit_failures": agg.audit_failures})
    return rows


def _algo_results(spec, scheme, snr):
    if scheme not in ("malc-pa", "ralc-pa"):
        raise ConfigurationError(f"recipe {spec.recipe} needs malc-pa or ralc-pa, got {scheme}")
    cfg = spec.config.with_snr(snr)
    log.info("%s at %g dB: %d trials", scheme, snr, spec.n_trials)
    return run_trials(scheme, cfg, range(spec.n_trials), spec.workers)


def gp_trace_rows(scheme, snr, results, epsilon):
    """Mean PD metric per GP iteration over the first power update of each trial."""
    traces = [r.info["pd_traces"][0] for r in results]
    n = len(traces)
    rows = []
    for i in range(max(len(t) for t in traces)):
        live = [t[i] for t in traces if len(t) > i]
        mean = float(np.mean(live))
        done = sum(1 for t in traces if len(t) <= i + 1 and t[-1] < epsilon)
        rows.append({"scheme": scheme, "snr_db": float(snr), "iteration": i + 1,
                     "mean_pd": mean, "mean_pd_db": 10.0 * math.log10(mean) if mean > 0 else -math.inf,
                     "active_trials": len(live), "converged_fraction": done / n})
    return rows


def _gp_rows(spec):
    rows = []
    for scheme in spec.schemes:
        for snr in spec.snr_db_grid:
            rows.extend(gp_trace_rows(scheme, snr, _algo_results(spec, scheme, snr),
                                      spec.config.epsilon))
    return rows


def _algo_rows(spec):
    rows = []
    for scheme in spec.schemes:
        for snr in spec.snr_db_grid:
            traces = np.array([r.info["perf_trace"] for r in _algo_results(spec, scheme, snr)])
            for l, value in enumerate(traces.mean(axis=0)):
                rows.append({"scheme": scheme, "snr_db": float(snr), "L_algo1": l,
                             "mean_perf_metric": float(value)})
    return rows


def cdf_rows(quantity, N, B, n_samples, n_points, seed):
    """Analytical and empirical CDF of V or D on a grid up to the 99.9% quantile."""
    rng = make_rng(seed, STREAM_SAMPLER, N, B)
    v, d = simulate_zf_leakage(N, B, n_samples, rng)
    samples = np.sort(v if quantity == "V" else d)
    top = float(samples[int(0.999 * (len(samples) - 1))])
    if quantity == "V":
        top = min(top, 1.0)
    xs = np.linspace(0.0, top, n_points)
    cdf = cdf_V if quantity == "V" else cdf_D
    analytical = np.atleast_1d(cdf(xs, N, B))
    empirical = np.searchsorted(samples, xs, side="right") / len(samples)
    return [{"quantity": quantity, "N": N, "B": B, "x": float(x), "analytical": float(a),
             "empirical": float(e)} for x, a, e in zip(xs, analytical, empirical)]


def _cdf_rows(spec):
    quantity = RECIPES[spec.recipe]["quantity"]
    rows = []
    for N, B in spec.cdf_pairs:
        log.info("P_%s for N=%d, B=%d", quantity, N, B)
        rows.extend(cdf_rows(quantity, N, B, spec.cdf_samples, spec.cdf_points,
                             spec.config.seed))
    return rows


def run(spec):
    """Execute ``spec`` and return ``(columns, rows)``."""
    kind = spec.kind
    runner = {"rate": _rate_rows, "cdf": _cdf_rows, "gp": _gp_rows, "algo": _algo_rows}[kind]
    return COLUMNS[kind], runner(spec)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metadata(spec):
    return {"tool": "leakbeam", "version": __version__, "command": spec.command,
            "kind": spec.kind, "config": spec.resolved()}


def render(spec, columns, rows):
    """Serialize rows; identical inputs give identical bytes."""
    meta = metadata(spec)
    if spec.output_format == "json":
        records = [{c: row[c] for c in columns} for row in rows]
        return json.dumps({"metadata": meta, "columns": list(columns), "records": records},
                          indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# {OUTPUT_MARKER}\n")
    for key in ("tool", "version", "command", "kind"):
        buf.write(f"# {key}={meta[key]}\n")
    for key, value in meta["config"].items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def write_output(spec, columns, rows, stream=None):
    text = render(spec, columns, rows)
    if spec.output_path is None:
        (stream or sys.stdout).write(text)
    else:
        with open(spec.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text

