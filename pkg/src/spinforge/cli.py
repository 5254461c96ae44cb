"""Batch front end: ``spinforge <command> --config <path> [--key value ...] --out <path>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import CapacityError, ConfigError, NumericalError
from .evolve import diagonalize, evolve_block, trotter_series
from .models import ModelSpec, build, build_oat
from .observables import coherence_batch, fidelity_batch, q_from_coherence, squeezing_batch
from .probe import certify
from .spinspace import coherent_x_state, random_symmetric_state
from .swt import (
    CouplingProfile,
    analytic_chi,
    chi_numeric,
    dispersion_curve,
    magnon_gap,
    one_magnon_energies,
    perturbative_validity,
)

log = logging.getLogger("spinforge")

COMMANDS = ("dispersion", "chi", "evolve", "bell", "squeeze", "probe", "fidelity", "phase-diagram")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# key -> (parser, default)
_MODEL_KEYS = {
    "kind": (str, "staggered_xxx"),
    "n": (int, 8),
    "j0": (float, 1.0),
    "hz": (float, 0.0),
    "delta": (float, 0.0),
    "gamma": (float, 1.0),
    "kac": (None, True),
    "distance": (str, "ring_minimal"),
    "chi": (float, None),
}
_RUN_KEYS = {
    "t_max": (float, None),
    "n_points": (int, 400),
    "trotter_dt": (float, 0.02),
    "seed": (int, 0),
    "frame": (str, "optimize"),
    "n_theta": (int, None),
    "state": (str, "coherent"),
    "t_probe": (float, None),
    "hz_list": (None, None),
    "delta_min": (float, -3.0),
    "delta_max": (float, 3.0),
    "n_delta": (int, 25),
    "gamma_min": (float, 0.0),
    "gamma_max": (float, 6.0),
    "n_gamma": (int, 25),
}
KNOWN_KEYS = {**_MODEL_KEYS, **_RUN_KEYS}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _convert(key: str, raw):
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown config key {key!r}", key)
    if not isinstance(raw, str):
        return raw
    parser = KNOWN_KEYS[key][0]
    if key == "kac":
        parser = _parse_bool
    elif key == "hz_list":
        parser = _parse_floats
    try:
        return parser(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})", key) from exc


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", "config") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value", None)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    model: ModelSpec
    t_max: float | None = None
    n_points: int = 400
    options: dict = field(default_factory=dict)
    output_path: str | None = None
    seed: int = 0

    def opt(self, key: str):
        return self.options.get(key, _RUN_KEYS[key][1])

    def echo(self) -> dict:
        return {
            "command": self.command,
            "model": self.model.to_dict(),
            "t_max": self.t_max,
            "n_points": self.n_points,
            "seed": self.seed,
            "options": {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.options.items())},
        }


def make_config(command: str, values: dict, output_path: str | None = None) -> ExperimentConfig:
    """Validate raw key/value pairs (strings or typed values) into an ExperimentConfig."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}", "command")
    parsed = {k: _convert(k, v) for k, v in values.items()}
    model_args = {k: parsed.get(k, d) for k, (_, d) in _MODEL_KEYS.items()}
    try:
        model = ModelSpec(
            kind=model_args["kind"],
            n_sites=model_args["n"],
            J0=model_args["j0"],
            h_z=model_args["hz"],
            delta=model_args["delta"],
            gamma=model_args["gamma"],
            kac=model_args["kac"],
            distance=model_args["distance"],
            chi=model_args["chi"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model: {exc}", _guess_key(str(exc))) from exc
    options = {k: v for k, v in parsed.items() if k in _RUN_KEYS}
    t_max = options.pop("t_max", None)
    n_points = options.pop("n_points", _RUN_KEYS["n_points"][1])
    seed = options.pop("seed", 0)
    if t_max is not None and not (math.isfinite(t_max) and t_max > 0):
        raise ConfigError(f"t_max must be positive, got {t_max}", "t_max")
    if n_points < 1:
        raise ConfigError(f"n_points must be >= 1, got {n_points}", "n_points")
    for key in ("n_delta", "n_gamma"):
        if key in options and options[key] < 1:
            raise ConfigError(f"{key} must be >= 1", key)
    if "trotter_dt" in options and not options["trotter_dt"] > 0:
        raise ConfigError("trotter_dt must be positive", "trotter_dt")
    if options.get("frame", "optimize") not in ("identity", "fixed_rotation", "optimize"):
        raise ConfigError(f"unknown frame {options['frame']!r}", "frame")
    if options.get("state", "coherent") not in ("coherent", "random_symmetric"):
        raise ConfigError(f"unknown initial state {options['state']!r}", "state")
    return ExperimentConfig(command, model, t_max, n_points, options, output_path, seed)


def _guess_key(message: str) -> str | None:
    for key, attr in (("kind", "kind"), ("n", "n_sites"), ("j0", "J0"), ("hz", "h_z"), ("delta", "delta"),
                      ("gamma", "gamma"), ("distance", "distance"), ("chi", "chi")):
        if attr in message:
            return key
    return None


# --- results ----------------------------------------------------------------


@dataclass(eq=False)
class ResultTable:
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = {}
        for name, values in self.columns.items():
            arr = np.atleast_1d(np.asarray(values))
            if np.iscomplexobj(arr):
                cols[f"re_{name}"] = arr.real
                cols[f"im_{name}"] = arr.imag
            else:
                cols[name] = arr
        lengths = {len(v) for v in cols.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        self.columns = cols

    def __len__(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self) -> str:
        names = list(self.columns)
        lines = [",".join(names)]
        for i in range(len(self)):
            lines.append(",".join(_fmt(self.columns[n][i]) for n in names))
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(table: ResultTable, path: str) -> None:
    _write_atomic(path, table.to_csv())
    meta = {**table.metadata, "timestamp": datetime.now(timezone.utc).isoformat()}
    _write_atomic(path + ".meta.json", json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --- experiment kernels -----------------------------------------------------


def default_t_max(spec: ModelSpec) -> float:
    """pi / |chi|; chi = 0 falls back to the |delta| = 1 scale 2 pi (N - 1) / J0."""
    chi = analytic_chi(spec)
    if chi == 0:
        return 2 * math.pi * (spec.n_sites - 1) / spec.J0
    return math.pi / abs(chi)


def time_grid(spec: ModelSpec, t_max: float | None, n_points: int) -> np.ndarray:
    t_max = t_max if t_max is not None else default_t_max(spec)
    # endpoint excluded so that chi t = pi / 2 falls on a grid point for even n_points
    return t_max * np.arange(n_points) / n_points


def rescaled_axis(spec: ModelSpec, times: np.ndarray) -> np.ndarray:
    return abs(analytic_chi(spec)) * times / math.pi


def initial_state(config: ExperimentConfig):
    n = config.model.n_sites
    if config.opt("state") == "random_symmetric":
        return random_symmetric_state(n, np.random.default_rng(config.seed))
    return coherent_x_state(n)


def _exact_block(spec: ModelSpec, psi0, times) -> np.ndarray:
    return evolve_block(build(spec), psi0, times, diagonalize(build(spec)))


def _oat_block(spec: ModelSpec, psi0, times) -> np.ndarray:
    oat = build_oat(spec.n_sites, analytic_chi(spec))
    return evolve_block(oat, psi0, times)


def _q_series(amps: np.ndarray, n: int, frame: str) -> np.ndarray:
    return q_from_coherence(coherence_batch(amps, n, frame), n)


def run_dispersion(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    if spec.kind == "staggered_xxx":
        # dispersion of the uniform exchange part
        spec = ModelSpec("staggered_xxx", spec.n_sites, J0=spec.J0)
        delta = 0.0
    elif spec.kind == "longrange_xxz":
        delta = spec.delta
    else:
        raise ConfigError("dispersion needs kind staggered_xxx or longrange_xxz", "kind")
    profile = CouplingProfile.from_spec(spec)
    q, eps_a = dispersion_curve(profile, delta)
    _, eps_n = one_magnon_energies(build(spec))
    return ResultTable({"q": q, "eps_analytic": eps_a, "eps_numeric": eps_n, "abs_diff": np.abs(eps_n - eps_a)})


def run_chi(config: ExperimentConfig) -> ResultTable:
    base = config.model
    if base.kind not in ("staggered_xxx", "longrange_xxz"):
        raise ConfigError("chi needs kind staggered_xxx or longrange_xxz", "kind")
    hz_values = config.opt("hz_list") or (base.h_z,)
    rows = {k: [] for k in ("h_z", "chi_analytic", "chi_numeric", "rel_diff", "gap", "h_over_gap", "perturbative")}
    for h in hz_values:
        spec = ModelSpec(**{**base.to_dict(), "h_z": h})
        chi_a = analytic_chi(spec)
        chi_n = chi_numeric(build(spec), spec.n_sites)
        profile = CouplingProfile.from_spec(spec)
        gap = magnon_gap(profile, spec.delta if spec.kind == "longrange_xxz" else 0.0)
        ratio, ok = perturbative_validity(h, gap) if gap > 0 else (math.inf, False)
        rows["h_z"].append(h)
        rows["chi_analytic"].append(chi_a)
        rows["chi_numeric"].append(chi_n)
        rows["rel_diff"].append(abs(chi_n - chi_a) / abs(chi_a) if chi_a else math.nan)
        rows["gap"].append(gap)
        rows["h_over_gap"].append(ratio)
        rows["perturbative"].append(int(ok))
    return ResultTable(rows)


def run_bell(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    times = time_grid(spec, config.t_max, config.n_points)
    psi0 = initial_state(config)
    frame = config.opt("frame")
    n = spec.n_sites
    q_exact = _q_series(_exact_block(spec, psi0, times), n, frame)
    q_oat = _q_series(_oat_block(spec, psi0, times), n, frame)
    if spec.kind == "staggered_xxx":
        block, _, _ = trotter_series(spec, psi0, times, max_dt_energy=config.opt("trotter_dt"))
        q_trot = _q_series(block, n, frame)
    else:
        q_trot = np.full(times.size, np.nan)
    return ResultTable({
        "t": times,
        "chi_t_over_pi": rescaled_axis(spec, times),
        "Q_exact": q_exact,
        "Q_oat": q_oat,
        "Q_trotter": q_trot,
    })


def run_evolve(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    times = time_grid(spec, config.t_max, config.n_points)
    block = _exact_block(spec, initial_state(config), times)
    n = spec.n_sites
    return ResultTable({
        "t": times,
        "chi_t_over_pi": rescaled_axis(spec, times),
        "Q": _q_series(block, n, config.opt("frame")),
        "xi2": squeezing_batch(block, n),
        "F_sym": fidelity_batch(block, n),
    })


def run_squeeze(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    times = time_grid(spec, config.t_max, config.n_points)
    psi0 = initial_state(config)
    n = spec.n_sites
    return ResultTable({
        "t": times,
        "chi_t_over_pi": rescaled_axis(spec, times),
        "xi2_exact": squeezing_batch(_exact_block(spec, psi0, times), n),
        "xi2_oat": squeezing_batch(_oat_block(spec, psi0, times), n),
    })


def run_fidelity(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    times = time_grid(spec, config.t_max, config.n_points)
    block = _exact_block(spec, initial_state(config), times)
    return ResultTable({
        "t": times,
        "chi_t_over_pi": rescaled_axis(spec, times),
        "F_sym": fidelity_batch(block, spec.n_sites),
    })


def run_probe(config: ExperimentConfig) -> ResultTable:
    spec = config.model
    chi = analytic_chi(spec)
    t = config.opt("t_probe")
    if t is None:
        t = math.pi / (2 * abs(chi)) if chi else 0.0
    (psi_t,) = evolve_block(build(spec), initial_state(config), [t]).T
    state = initial_state(config).with_amplitudes(psi_t)
    result = certify(state, config.opt("n_theta"))
    grid = result["grid"]
    rows = list(grid.rows())
    cols = list(zip(*rows))
    q_direct = float(_q_series(psi_t, spec.n_sites, "fixed_rotation")[0])
    extra = {"t_probe": t, "rho": complex(result["rho"]), "Q_probe": result["Q"], "Q_direct_fixed_frame": q_direct}
    return ResultTable(
        {"k": np.array(cols[0]), "tau": cols[1], "theta": cols[2], "re_a": cols[3], "im_a": cols[4]},
        {"probe": extra},
    )


def phase_cell(model: dict, t_max: float | None, n_points: int) -> tuple[float, float, float]:
    """(max_t Q, min_t xi^2, min_t F_sym) for one (delta, gamma) point."""
    spec = ModelSpec(**model)
    times = time_grid(spec, t_max, n_points)
    block = _exact_block(spec, coherent_x_state(spec.n_sites), times)
    n = spec.n_sites
    q = _q_series(block, n, "optimize")
    xi2 = squeezing_batch(block, n)
    xi2_min = float(np.nanmin(xi2)) if np.any(np.isfinite(xi2)) else math.nan
    return float(np.max(q)), xi2_min, float(np.min(fidelity_batch(block, n)))


def _axis(lo: float, hi: float, count: int) -> np.ndarray:
    return np.array([lo]) if count == 1 else np.linspace(lo, hi, count)


def sweep(config: ExperimentConfig, jobs: int | None = None) -> ResultTable:
    """Phase diagram over (delta, gamma) for the long-range XXZ chain, rows in row-major order."""
    base = config.model
    if base.kind != "longrange_xxz":
        raise ConfigError("phase-diagram sweeps need kind longrange_xxz", "kind")
    deltas = _axis(config.opt("delta_min"), config.opt("delta_max"), config.opt("n_delta"))
    gammas = _axis(config.opt("gamma_min"), config.opt("gamma_max"), config.opt("n_gamma"))
    cells = [(float(d), float(g)) for d in deltas for g in gammas]
    models = [{**base.to_dict(), "delta": d, "gamma": g} for d, g in cells]
    for m in models:
        ModelSpec(**m)
    args = ([m for m in models], [config.t_max] * len(models), [config.n_points] * len(models))
    jobs = jobs if jobs is not None else (os.cpu_count() or 1)
    if jobs <= 1 or len(models) == 1:
        results = list(map(phase_cell, *args))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(phase_cell, *args))
    q, xi2, fsym = (np.array(col) for col in zip(*results))
    return ResultTable({
        "delta": [c[0] for c in cells],
        "gamma": [c[1] for c in cells],
        "Q_max": q,
        "xi2_min": xi2,
        "F_sym_min": fsym,
    })


_RUNNERS = {
    "dispersion": run_dispersion,
    "chi": run_chi,
    "evolve": run_evolve,
    "bell": run_bell,
    "squeeze": run_squeeze,
    "fidelity": run_fidelity,
    "probe": run_probe,
}


def run(config: ExperimentConfig, jobs: int | None = None) -> ResultTable:
    """Run one experiment, attach metadata and write the CSV if an output path is set."""
    start = time.perf_counter()
    if config.command == "phase-diagram":
        table = sweep(config, jobs)
    else:
        table = _RUNNERS[config.command](config)
    table.metadata.update({
        "config": config.echo(),
        "version": __version__,
        "numpy": np.__version__,
        "wall_time_s": time.perf_counter() - start,
    })
    if config.output_path:
        write_outputs(table, config.output_path)
    return table


# --- entry point ------------------------------------------------------------


def _split_overrides(extra: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}", None)
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}", key.replace("-", "_"))
            value = extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinforge", description="Spin-chain Bell-correlation experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        values = read_config_file(args.config) if args.config else {}
        values.update(_split_overrides(extra))
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1", "jobs")
        config = make_config(args.command, values, args.out)
        table = run(config, args.jobs)
    except (ConfigError, CapacityError) as exc:
        key = getattr(exc, "key", None)
        print(f"config error{f' [{key}]' if key else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("wrote %d rows to %s", len(table), args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
