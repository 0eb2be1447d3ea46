"""Command-line experiment runner.

Each subcommand reads an optional JSON config, lets flags override it,
validates the result, runs, and writes ``results.csv``, ``summary.json``
and ``manifest.json`` into ``--out``. Exit status: 0 when every enabled
bound holds, 1 on a bound violation, 2 on a config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .circle import CantorCdf, Lebesgue
from .homeo import PLHomeo, random_homeo, rotation
from .numeric import Q, exact, frac_str
from .pivot import (PivotInput, Triple, XDistribution, pivot_gain_fraction, pivot_run,
                    pivot_states, x_sum_survival)
from .schottky import StepMeasure, is_schottky_pair, make_canonical_schottky, pp_fixture
from .tits import (SearchBudget, SemigroupBall, detect_repeller, double_cover_lift,
                   find_contractible_eps, schottky_from_repeller)
from .walk import (ExperimentConfig, amplified_fixture, lemma_suite, local_contraction_experiment,
                   pingpong_experiment, perturbation_experiment, rep_measure,
                   symmetric_measure, sync_experiment, trial_rng, wilson_interval)

SCHEMA_VERSION = 1
CSV_COLUMNS = ["experiment", "n", "trials", "successes", "frequency", "wilson_lo", "wilson_hi", "bound_value"]


class ConfigError(Exception):
    pass


# config schemas -----------------------------------------------------------

Number = Union[float, int, str]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MeasureSpec(Strict):
    fixture: Literal["amplified", "canonical", "identity"] = "amplified"
    N: int = Field(2, ge=1)
    offset: Number = 0
    interleaved: bool = False
    symmetric: bool = True

    def build(self) -> StepMeasure:
        if self.fixture == "identity":
            return StepMeasure.point_mass(PLHomeo.identity())
        if self.fixture == "canonical":
            S = make_canonical_schottky(self.N)
        else:
            S = amplified_fixture(self.N, exact(self.offset), self.interleaved)
        return symmetric_measure(S) if self.symmetric else rep_measure(S)


class Common(Strict):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    trials: int = Field(1000, ge=1)
    threads: int = Field(1, ge=1)
    exact: Optional[bool] = None


class SyncConfig(Common):
    measure: MeasureSpec = MeasureSpec()
    checkpoints: list[int] = [10, 20, 40, 60]
    x: Number = 0
    y: Number = "1/2"
    side: Literal["left", "right"] = "left"
    perturb_delta: Optional[Number] = None


class PingPongConfig(Common):
    measure: MeasureSpec = MeasureSpec()
    measure2: MeasureSpec = MeasureSpec(offset="1/16")
    checkpoints: list[int] = [10, 40]
    budget: int = Field(16, ge=0)
    side: Literal["left", "right"] = "left"


class LocalConfig(Common):
    measure: MeasureSpec = MeasureSpec()
    checkpoints: list[int] = [10, 20, 30, 40]
    horizon: int = Field(60, ge=1)
    q: float = Field(0.9, gt=0, lt=1)
    x: Number = 0
    len_measure: Literal["lebesgue", "cantor"] = "lebesgue"
    side: Literal["left", "right"] = "left"


class PivotConfig(Common):
    N: int = Field(2500, ge=1)
    n: int = Field(10, ge=1)
    domination_n: int = Field(20, ge=1)
    contexts: int = Field(2, ge=0)
    w: Literal["identity", "random"] = "identity"


class TitsConfig(Common):
    generators: Union[Literal["pp", "rotation", "hyperbolic", "antipodal"], str] = "pp"
    depth: int = Field(12, ge=1)
    tol: float = Field(1e-6, gt=0)
    grid: int = Field(1024, ge=2)
    repeller_grid: int = Field(256, ge=2)
    beam: int = Field(64, ge=1)


class LemmaConfig(Common):
    fixture: str = "S4"
    n: int = Field(16, ge=1)


SCHEMAS = {"sync": SyncConfig, "pingpong": PingPongConfig, "local-contraction": LocalConfig,
           "pivot-stats": PivotConfig, "tits-search": TitsConfig, "lemma-suite": LemmaConfig}


def load_config(subcommand: str, path: Optional[str], overrides: dict) -> BaseModel:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SCHEMAS[subcommand].model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(f"config error at {where}: {err['msg']}") from exc


# output -------------------------------------------------------------------

def row(experiment, n, trials, successes, bound_value=None) -> dict:
    lo, hi = wilson_interval(successes, trials)
    return {"experiment": experiment, "n": n, "trials": trials, "successes": successes,
            "frequency": f"{successes / trials:.10g}", "wilson_lo": f"{lo:.10g}",
            "wilson_hi": f"{hi:.10g}", "bound_value": "" if bound_value is None else f"{bound_value:.10g}"}


def write_csv(path: Path, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    path.write_text(buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        if isinstance(obj, float) and not math.isfinite(obj):
            return str(obj)
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    try:
        return frac_str(obj)
    except Exception:
        return str(obj)


# subcommands --------------------------------------------------------------

def _threads(cfg) -> int:
    return cfg.threads


def run_sync(cfg: SyncConfig) -> tuple:
    mu = cfg.measure.build()
    exp = ExperimentConfig(mu, tuple(cfg.checkpoints), cfg.trials, cfg.seed, cfg.side,
                           exact=cfg.exact if cfg.exact is not None else True, threads=cfg.threads)
    fit, _ = sync_experiment(exp, exact(cfg.x), exact(cfg.y))
    rows = []
    k = fit.kappa_hat
    for n in fit.checkpoints:
        fails = round(fit.frequencies[n] * cfg.trials)
        bound = math.exp(-k * n) / k if k > 0 else None
        rows.append(row("sync_failure", n, cfg.trials, fails, bound))
    summary = {"kappa_hat": k, "r2": fit.r2, "slope": fit.slope, "flag": fit.flag,
               "median_log_distance": fit.median_log_distance}
    failures = [] if fit.synchronized else ["no synchronization"]
    if cfg.perturb_delta is not None:
        rep = perturbation_experiment(exp, exact(cfg.perturb_delta), exact(cfg.x), exact(cfg.y))
        summary["perturbation"] = {"kappa_hat": rep["perturbed"].kappa_hat,
                                   "kappa_ratio": rep["kappa_ratio"], "envelope_ok": rep["envelope_ok"]}
        if not rep["envelope_ok"]:
            failures.append("perturbed envelope")
    return rows, summary, failures


def run_pingpong(cfg: PingPongConfig) -> tuple:
    exp = ExperimentConfig(cfg.measure.build(), tuple(cfg.checkpoints), cfg.trials, cfg.seed, cfg.side,
                           mu2=cfg.measure2.build(), exact=True, threads=cfg.threads, budget=cfg.budget)
    table, verified, _ = pingpong_experiment(exp)
    rows = [row("pingpong_certified", n, cfg.trials, k, 0.9 if n == 40 else None)
            for n, (k, _, _) in table.items()]
    failures = [] if verified else ["certificate re-verification"]
    ns = sorted(table)
    if len(ns) > 1 and table[ns[-1]][2][1] < table[ns[0]][2][0]:
        failures.append("certified frequency decreasing")
    return rows, {"frequencies": {n: v[1] for n, v in table.items()}, "all_verified": verified}, failures


# the expanding pieces of Z_k soon get thinner than the float spacing, which
# makes float contracted arcs unreliable; exact mode is the default until
# rational denominators make it too slow
FLOAT_HORIZON = 100


def run_local(cfg: LocalConfig) -> tuple:
    m = CantorCdf() if cfg.len_measure == "cantor" else Lebesgue()
    use_exact = cfg.exact if cfg.exact is not None else cfg.horizon < FLOAT_HORIZON
    exp = ExperimentConfig(cfg.measure.build(), tuple(cfg.checkpoints), cfg.trials, cfg.seed, cfg.side,
                           len_measure=m, q=cfg.q, horizon=cfg.horizon,
                           exact=use_exact, threads=cfg.threads)
    table, _ = local_contraction_experiment(exp, exact(cfg.x))
    rows, failures = [], []
    for n, v in table.items():
        rows.append(row("main2", n, cfg.trials, v["main2_successes"], 0.9 if n == 20 else None))
        rows.append(row("main3", n, cfg.trials, v["main3_successes"]))
    if 20 in table and table[20]["main2_ci"][1] < 0.9:
        failures.append("main2 frequency at n=20 below 0.9")
    ns = sorted(table)
    # non-decreasing up to Wilson slack
    if any(table[b]["main3_ci"][1] < table[a]["main3_ci"][0] for a, b in zip(ns, ns[1:])):
        failures.append("main3 monotonicity")
    return rows, {"horizon": cfg.horizon, "q": cfg.q, "len_measure": cfg.len_measure, "exact": use_exact}, failures


def run_pivot(cfg: PivotConfig) -> tuple:
    S = make_canonical_schottky(cfg.N)
    N, zeta = S.N, S.zeta
    rows, failures, summary = [], [], {}
    idm = PLHomeo.identity()

    def draw(rng, n):
        slots = rng.integers(N, size=(n, 3))
        # w_0 stays the identity: the step-1 gain needs every J slot inside w_0⁻¹ of the median
        ws = [idm] * (n + 1) if cfg.w == "identity" else [idm] + [random_homeo(rng, 4, 1 << 10) for _ in range(n)]
        return PivotInput(S, ws, [Triple.from_slots(S, *map(int, s)) for s in slots])

    low = 0
    for trial in range(cfg.trials):
        st = pivot_run(draw(trial_rng(cfg.seed, trial), cfg.n), cfg.n, track_product=False)
        low += 2 * len(st.P) <= cfg.n
    bound = 0.6 ** cfg.n
    rows.append(row("pivot_tail", cfg.n, cfg.trials, low, bound))
    if wilson_interval(low, cfg.trials)[0] > bound:
        failures.append("pivot tail bound 0.6^n")

    if 4 * zeta ** 2 < N:
        dist = XDistribution(N, zeta)
        n = cfg.domination_n
        counts = np.zeros(n + 2, dtype=int)
        for trial in range(cfg.trials):
            st = pivot_run(draw(trial_rng(cfg.seed, trial, 1), n), n, track_product=False)
            counts[len(st.P)] += 1
        surv = x_sum_survival(dist, n)
        for T in range(1, n + 1):
            k = int(counts[T:].sum())
            rows.append(row("pivot_domination", T, cfg.trials, k, surv[T]))
            if wilson_interval(k, cfg.trials)[1] < surv[T]:
                failures.append(f"domination at threshold {T}")
    gains = []
    bound_gain = 1 - 4 * zeta ** 2 / math.sqrt(N)
    for c in range(cfg.contexts):
        rng = trial_rng(cfg.seed, c, 2)
        inp = draw(rng, 5)
        states = list(pivot_states(inp, 4, track_product=False))
        w_n = random_homeo(rng, 4, 1 << 10)
        gains.append(float(pivot_gain_fraction(states[-1], w_n, S)))
        if gains[-1] < bound_gain:
            failures.append("pivot gain")
    summary["pivot_gain"] = {"fractions": gains, "bound": bound_gain}
    return rows, summary, failures


def _generators(spec: str) -> list:
    if spec == "pp":
        pp = pp_fixture()
        return [pp.f1, pp.f2]
    if spec == "rotation":
        return [rotation(Q(1, 3)), rotation(Q(1, 5))]
    if spec == "hyperbolic":
        return [pp_fixture().f1]
    if spec == "antipodal":
        pp = pp_fixture()
        return [double_cover_lift(pp.f1), double_cover_lift(pp.f2)]
    path = Path(spec)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config error at generators: cannot read {spec}: {exc}") from exc
    items = data if isinstance(data, list) else data.get("generators", [])
    try:
        return [PLHomeo.from_json(item) for item in items]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config error at generators: {exc}") from exc


def run_tits(cfg: TitsConfig) -> tuple:
    gens = _generators(cfg.generators)
    budget = SearchBudget(cfg.depth, cfg.tol, cfg.grid, cfg.beam, cfg.repeller_grid)
    ball = SemigroupBall(gens, cfg.depth)
    eps = find_contractible_eps(SemigroupBall(gens, min(cfg.depth, 15)), cfg.tol, cfg.grid)
    reps = detect_repeller(ball, budget)
    pair = schottky_from_repeller(ball, budget, reps) if reps else None
    witness, verified = None, True
    if pair is not None:
        verified = is_schottky_pair(*pair)
        f1, f2, U1, U2, V1, V2 = pair
        witness = {"f1": f1.to_json(), "f2": f2.to_json(),
                   "sets": [s.to_json() for s in (U1, U2, V1, V2)]}
    report = {"found": pair is not None, "witness": witness,
              "budget": {"depth": cfg.depth, "tol": cfg.tol, "grid": cfg.grid, "beam": cfg.beam},
              "verified": verified, "contractible_eps": None if eps is None else frac_str(eps),
              "repellers": [frac_str(x) for x in reps]}
    return [], report, [] if verified else ["witness re-verification"]


def run_lemmas(cfg: LemmaConfig) -> tuple:
    try:
        N = int(cfg.fixture.lstrip("S"))
    except ValueError as exc:
        raise ConfigError(f"config error at fixture: expected S<N>, got {cfg.fixture!r}") from exc
    S = make_canonical_schottky(N)
    checks = lemma_suite(S, trials=cfg.trials, seed=cfg.seed, n=cfg.n)
    rows, failures = [], []
    for name, entry in checks.items():
        if "successes" in entry:
            rows.append(row(name, entry.get("n", ""), entry["trials"], entry["successes"], entry["bound"]))
        if not entry["passed"]:
            failures.append(name)
    return rows, {"checks": checks}, failures


def run_fixtures(args) -> int:
    if args.kind == "pp":
        pp = pp_fixture()
        data = {"f1": pp.f1.to_json(), "f2": pp.f2.to_json(),
                "sets": [s.to_json() for s in (pp.U1, pp.U2, pp.V1, pp.V2)]}
    elif args.kind == "amplified":
        data = amplified_fixture(args.N).to_json()
    else:
        data = make_canonical_schottky(args.N).to_json()
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fixtures.json").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


RUNNERS = {"sync": run_sync, "pingpong": run_pingpong, "local-contraction": run_local,
           "pivot-stats": run_pivot, "tits-search": run_tits, "lemma-suite": run_lemmas}


# entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--out", default="out", help="output directory")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="exact", action="store_true", default=None)
    mode.add_argument("--float", dest="exact", action="store_false")
    common.add_argument("--threads", type=int, help="worker processes (default $SCHOTTKY_THREADS or 1)")

    parser = argparse.ArgumentParser(prog="schottky-walks", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    fx = sub.add_parser("fixtures", help="emit Schottky set or ping-pong fixtures")
    fx.add_argument("--N", type=int, default=4)
    fx.add_argument("--kind", choices=["canonical", "amplified", "pp"], default="canonical")
    fx.add_argument("--out", default=None)
    for name in RUNNERS:
        p = sub.add_parser(name, parents=[common])
        if name == "lemma-suite":
            p.add_argument("--fixture")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "fixtures":
        return run_fixtures(args)
    threads = args.threads
    if threads is None and os.environ.get("SCHOTTKY_THREADS"):
        try:
            threads = int(os.environ["SCHOTTKY_THREADS"])
        except ValueError:
            print("config error at threads: SCHOTTKY_THREADS is not an integer", file=sys.stderr)
            return 2
    overrides = {"seed": args.seed, "trials": args.trials, "threads": threads, "exact": args.exact}
    if args.command == "lemma-suite":
        overrides["fixture"] = args.fixture
    out = Path(args.out)
    try:
        cfg = load_config(args.command, args.config, overrides)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"subcommand": args.command, "config_path": args.config, "seed": cfg.seed,
                    "version": __version__, "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
                    "finished": None, "outputs": ["results.csv", "summary.json"]}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
        rows, summary, failures = RUNNERS[args.command](cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    write_csv(out / "results.csv", rows)
    doc = {"schema_version": SCHEMA_VERSION, "manifest": {k: manifest[k] for k in ("subcommand", "seed", "version")},
           "config": cfg.model_dump(mode="json"), "results": summary, "failures": failures}
    (out / "summary.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if failures:
        print("bound violation: " + ", ".join(failures), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
