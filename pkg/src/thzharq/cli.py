"""Command-line interface: ``thzharq <command> --config run.json``.

Every command reads one JSON configuration, writes a CSV or JSON artifact
and exits with 0 on success, 2 on configuration errors, 3 on numerical
non-convergence and 4 on infeasible rate selection.  Errors are reported as
one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import RunConfig, load_config, with_overrides
from .errors import ConfigError, ThzHarqError
from .montecarlo import (
    simulate_ltat,
    simulate_ltat_multihop,
    simulate_multihop,
    simulate_outage_all,
)
from .multihop import (
    HopTopology,
    hop_outage_table,
    ltat,
    ltat_multihop,
    multihop_outage_curve,
    outage_multihop_first_failure,
    outage_multihop_from_table,
)
from .optimizer import Method, RateProblem, optimal_rate_asymptotic, optimal_rate_surrogate
from .outage import HarqConfig, Scheme, outage_asymptotic, outage_exact_ir
from .surrogate import Dataset, SurrogateModel, TrainConfig, generate_dataset, train


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(meta: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# {meta}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, 1000, index])
               .generate_state(1, dtype=np.uint64)[0])


def _harq_at(rc: RunConfig, x: float) -> HarqConfig:
    var = rc.sweep.variable
    if var == "snr":
        return rc.harq.replace(snr_ref_db=x)
    if var == "rate":
        return rc.harq.replace(rate_bps_hz=x)
    raise ConfigError(f"sweep variable '{var}' does not apply to this command")


def _map(rc: RunConfig, fn, items):
    """Ordered map over sweep points, optionally on a process pool."""
    if rc.workers > 1:
        with ProcessPoolExecutor(max_workers=rc.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# --- outage-curve ----------------------------------------------------------

def _outage_point(args):
    rc, i, x = args
    h = _harq_at(rc, x)
    sims = simulate_outage_all(h, rc.link, rc.channel, rc.trials, _point_seed(rc.seed, i))
    rows = []
    for s in rc.schemes:
        hs = h.replace(scheme=s)
        exact = None
        if s == Scheme.IR.value and hs.rate_bps_hz > 0:
            exact = outage_exact_ir(hs, rc.link, rc.channel, rc.abate_whitt, rc.contour)
        try:
            asy = outage_asymptotic(hs, rc.link, rc.channel, rc.contour).outage
        except ConfigError:
            asy = None
        rows.append((x, exact, asy, sims[s].estimate, sims[s].std_error, s))
    return rows


def cmd_outage_curve(rc: RunConfig) -> str:
    pts = [(rc, i, x) for i, x in enumerate(rc.sweep.values())]
    rows = [r for chunk in _map(rc, _outage_point, pts) for r in chunk]
    return _csv_text(rc.metadata_line("outage-curve"),
                     ("x", "exact", "asymptotic", "mc_estimate", "mc_stderr", "scheme"), rows)


# --- ltat-curve ------------------------------------------------------------

def _ltat_point(args):
    rc, i, x = args
    h = _harq_at(rc, x)
    seed = _point_seed(rc.seed, i)
    topo = rc.topology
    rows = []
    for s in rc.schemes:
        hs = h.replace(scheme=s)
        if topo is None:
            sim = simulate_ltat(hs, rc.link, rc.channel, rc.trials, seed)
            if s == Scheme.IR.value and hs.rate_bps_hz > 0:
                per = [outage_exact_ir(hs.truncated(k), rc.link, rc.channel, rc.abate_whitt,
                                       rc.contour) for k in range(1, hs.k_max + 1)]
            else:
                per = _sim_per_round(rc, hs, seed)
            formula = ltat(hs, np.minimum.accumulate(per)) if hs.rate_bps_hz > 0 else 0.0
        else:
            sim = simulate_ltat_multihop(topo, hs, rc.link, rc.channel, rc.trials, seed)
            if s == Scheme.IR.value and hs.rate_bps_hz > 0:
                per = _multihop_exact_curve(rc, topo, hs)
            else:
                per = simulate_multihop(topo, hs, rc.link, rc.channel, rc.trials,
                                        seed + 1).per_round
            formula = ltat_multihop(topo, hs, np.minimum.accumulate(per)) if hs.rate_bps_hz > 0 else 0.0
        rows.append((x, formula, sim.estimate, sim.std_error, s))
    return rows


def _sim_per_round(rc, hs, seed):
    # no exact outage outside IR: the formula takes per-round outages from independent draws
    return simulate_outage_all(hs, rc.link, rc.channel, rc.trials, seed + 1)[hs.scheme.value].per_round


def _exact_fn(rc):
    def fn(cfg, link, chan):
        return outage_exact_ir(cfg, link, chan, rc.abate_whitt, rc.contour)
    return fn


def _multihop_exact_curve(rc, topo, hs):
    return multihop_outage_curve(topo, hs, rc.link, rc.channel, _exact_fn(rc))


def cmd_ltat_curve(rc: RunConfig) -> str:
    pts = [(rc, i, x) for i, x in enumerate(rc.sweep.values())]
    rows = [r for chunk in _map(rc, _ltat_point, pts) for r in chunk]
    return _csv_text(rc.metadata_line("ltat-curve"),
                     ("x", "ltat_formula", "ltat_sim", "ltat_stderr", "scheme"), rows)


# --- multihop --------------------------------------------------------------

def _multihop_point(args):
    rc, i, x = args
    h = _harq_at(rc, x)
    topo = rc.topology or HopTopology.split(rc.link.distance_m, 1)
    seed = _point_seed(rc.seed, i)
    p_n = topo.non_blocking()
    floor = 1.0 - float(np.prod(p_n))
    rows = []
    for s in rc.schemes:
        hs = h.replace(scheme=s)
        sim = simulate_multihop(topo, hs, rc.link, rc.channel, rc.trials, seed)
        exact = alt = None
        if s == Scheme.IR.value and hs.rate_bps_hz > 0:
            table = hop_outage_table(hs, topo.hop_links(rc.link), [rc.channel] * topo.hops,
                                     _exact_fn(rc))
            exact = outage_multihop_from_table(table, p_n, hs.k_max)
            alt = outage_multihop_first_failure(table, p_n, hs.k_max)
        rows.append((x, exact, alt, floor, sim.estimate, sim.std_error, s))
    return rows


def cmd_multihop(rc: RunConfig) -> str:
    pts = [(rc, i, x) for i, x in enumerate(rc.sweep.values())]
    rows = [r for chunk in _map(rc, _multihop_point, pts) for r in chunk]
    return _csv_text(rc.metadata_line("multihop"),
                     ("x", "exact", "first_failure", "blockage_floor", "mc_estimate", "mc_stderr",
                      "scheme"), rows)


# --- simulate --------------------------------------------------------------

def cmd_simulate(rc: RunConfig) -> str:
    h = rc.harq
    out = {"config_sha256": rc.digest(), "version": __version__, "trials": rc.trials,
           "seed": rc.seed, "outage": {}, "ltat": {}}
    topo = rc.topology
    for s in rc.schemes:
        hs = h.replace(scheme=s)
        if topo is None:
            o = simulate_outage_all(hs, rc.link, rc.channel, rc.trials, rc.seed)[s]
            t = simulate_ltat(hs, rc.link, rc.channel, rc.trials, rc.seed)
        else:
            o = simulate_multihop(topo, hs, rc.link, rc.channel, rc.trials, rc.seed)
            t = simulate_ltat_multihop(topo, hs, rc.link, rc.channel, rc.trials, rc.seed)
        out["outage"][s] = dataclasses.asdict(o)
        out["ltat"][s] = dataclasses.asdict(t)
    return _json_text(out)


# --- dataset / train / optimize -------------------------------------------

def cmd_dataset(rc: RunConfig) -> str:
    d = rc.dataset
    known = {"n", "upsilon", "sim_trials"}
    if set(d) - known:
        raise ConfigError(f"unknown keys in 'dataset': {sorted(set(d) - known)}")
    ds = generate_dataset(int(d.get("n", 12_500)), float(d.get("upsilon", 1e-4)),
                          int(d.get("sim_trials", rc.trials)), rc.seed, rc.link, rc.channel)
    meta = rc.metadata_line("dataset") + f" redraws={ds.meta['redraws']}"
    return ds.to_csv(comment=meta)


def cmd_train(rc: RunConfig) -> str:
    t = dict(rc.train)
    path = t.pop("dataset_path", None)
    if path is None:
        raise ConfigError("train.dataset_path is required")
    if "hidden" in t:
        t["hidden"] = tuple(t["hidden"])
    t.setdefault("seed", rc.seed)
    try:
        tc = TrainConfig(**t)
    except TypeError as exc:
        raise ConfigError(f"bad section 'train': {exc}") from exc
    ds = Dataset.from_csv(path)
    model = train(ds, tc)
    model.metadata["config_sha256"] = rc.digest()
    model.metadata["version"] = __version__
    model.metadata["dataset_rows"] = len(ds)
    return json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n"


def _optimize_one(rc: RunConfig, o: dict, method: str, epsilon: float) -> dict:
    prob = RateProblem(rc.harq, epsilon, tuple(o.get("rate_bounds", (0.01, 5.0))), method)
    if prob.method is Method.ASYMPTOTIC:
        r = optimal_rate_asymptotic(prob, rc.link, rc.channel)
    else:
        if "model_path" not in o:
            raise ConfigError("optimize.model_path is required for the surrogate method")
        model = SurrogateModel.load(o["model_path"])
        r = optimal_rate_surrogate(prob, model, rc.harq.snr_ref_db,
                                   float(o.get("beam_waist", rc.channel.beam_waist_m)),
                                   rc.link, rc.channel)
    return {"rate": r.rate, "ltat": r.ltat, "method": r.method, "iterations": r.iterations,
            "evaluations": r.evaluations, "outage": r.outage, "epsilon": prob.epsilon}


def cmd_optimize(rc: RunConfig) -> str:
    o = dict(rc.optimize)
    known = {"method", "epsilon", "rate_bounds", "model_path", "beam_waist"}
    if set(o) - known:
        raise ConfigError(f"unknown keys in 'optimize': {sorted(set(o) - known)}")
    if "method" not in o:
        raise ConfigError("optimize.method is required")
    method = o["method"]
    methods = ["asymptotic", "surrogate"] if method == "both" else [Method(method).value]
    if "epsilon" in o:
        epsilons = [float(o["epsilon"])]
    elif rc.sweep.variable == "epsilon":
        epsilons = rc.sweep.values()
    else:
        raise ConfigError("optimize.epsilon is required unless the sweep variable is epsilon")

    def report(eps):
        res = {m: _optimize_one(rc, o, m, eps) for m in methods}
        return res[methods[0]] if len(methods) == 1 else {"epsilon": eps, "results": res}

    reports = [report(e) for e in epsilons]
    out = dict(reports[0]) if len(reports) == 1 else {"sweep": reports}
    out.update({"config_sha256": rc.digest(), "version": __version__})
    return _json_text(out)


COMMANDS = {
    "outage-curve": cmd_outage_curve,
    "ltat-curve": cmd_ltat_curve,
    "multihop": cmd_multihop,
    "simulate": cmd_simulate,
    "dataset": cmd_dataset,
    "train": cmd_train,
    "optimize": cmd_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thzharq", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"thzharq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--trials", type=int, help="override the Monte Carlo trial count")
        sp.add_argument("--out", help="output path ('-' for stdout)")
    return p


def _error(exc: Exception, code: int):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = with_overrides(load_config(args.config), args.seed, args.trials, args.out)
        text = COMMANDS[args.command](rc)
        _write(rc.output_path, text)
    except ThzHarqError as exc:
        return _error(exc, exc.exit_code)
    except (ValueError, TypeError, KeyError) as exc:
        return _error(exc, 2)
    except OSError as exc:
        return _error(exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
