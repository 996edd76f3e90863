"""Command-line entry point and the guard-set ``g`` line format.

Every command takes its randomness from ``--seed`` only; outputs carry a
``# manifest=<digest>`` first line pointing at the ``manifest.json`` written
next to them.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

import numpy as np

from .adversary import STRATEGIES, TARGETED, AdversaryConfig
from .asgraph import AsRelParseError, load_as_rel
from .assignment import AS, BW, DESIGNS, SINGLE
from .bwsets import initial_bw_state
from .fixtures import tree_graph, tree_guards
from .hierarchy import Hierarchy, Thresholds, full_update
from .ids import is_valid_id
from .ingest import (SnapshotParseError, eligible_guards, format_consensus, label_snapshot,
                     parse_consensus, parse_prefix_table, parse_snapshot_csv)
from .pathsec import (AsPathOracle, ExitProbabilityTable, PathSecConfig, PathTableError, SuspectConfig,
                      guard_set_options, vulnerable_stream_rate)
from .simkit import SimulationConfig, manifest, manifest_digest, run_simulation, run_targeted
from .trace import Trace, TraceConfig, generate_trace

logger = logging.getLogger("guardsets")

G_LINE = re.compile(r"g (\d{16}) (\d{16}) (\d{16})\n")
G_LINE_BYTES = 53


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# g lines
# ---------------------------------------------------------------------------

def g_line(superset_id: int, set_id: int, subset_id: int) -> str:
    for x in (superset_id, set_id, subset_id):
        if not is_valid_id(x):
            raise AssertionError(f"guard-set id {x!r} is not 16 digits")
    return f"g {superset_id:016d} {set_id:016d} {subset_id:016d}\n"


def g_lines_by_guard(h: Hierarchy) -> dict:
    """fingerprint -> its ``g`` line."""
    out = {}
    for ss, s, sub in h.iter_subsets():
        line = g_line(ss.id, s.id, sub.id)
        for g in sub.guards:
            out[g] = line
    return out


def emit_g_lines(h: Hierarchy) -> str:
    """One ``g`` line per guard, ordered by fingerprint."""
    lines = g_lines_by_guard(h)
    return "".join(lines[g] for g in sorted(lines))


def parse_g_lines(text: str) -> list[tuple[int, int, int]]:
    out, pos = [], 0
    for m in G_LINE.finditer(text):
        if m.start() != pos:
            raise ValueError(f"malformed g line at byte {pos}")
        out.append(tuple(int(x) for x in m.groups()))
        pos = m.end()
    if pos != len(text):
        raise ValueError(f"malformed g line at byte {pos}")
    return out


def g_line_overhead(h: Hierarchy) -> int:
    return len(emit_g_lines(h).encode())


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_SIM_FIELDS = {f.name: f for f in dataclasses.fields(SimulationConfig)}
_TRACE_FIELDS = {f.name: f for f in dataclasses.fields(TraceConfig)}


def read_config(path: str) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            k, v = (x.strip() for x in line.split("=", 1))
            out[k] = v
    return out


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def configs_from(raw: dict, args) -> tuple[SimulationConfig, TraceConfig]:
    """Config file keys first, then explicit flags on top."""
    sim, trc, adv = {}, {}, {}
    base_sim, base_trc = SimulationConfig(), TraceConfig()
    for k, v in raw.items():
        if k.startswith("trace."):
            name = k[6:]
            if name not in _TRACE_FIELDS or name == "shocks":
                raise UsageError(f"unknown trace key {k!r}")
            trc[name] = _coerce(v, getattr(base_trc, name))
        elif k in ("strategy", "fraction"):
            adv[k] = v
        elif k == "days":
            sim["days"] = int(v)
        elif k in _SIM_FIELDS and k != "adversary":
            sim[k] = _coerce(v, getattr(base_sim, k))
        else:
            raise UsageError(f"unknown config key {k!r}")
    for flag, key in (("design", "design"), ("tau_up", "tau_up"), ("tau_down", "tau_down"),
                      ("n_supersets", "n_supersets"), ("clients", "clients"), ("seed", "seed"),
                      ("days", "days")):
        v = getattr(args, flag, None)
        if v is not None:
            sim[key] = v
    if getattr(args, "strategy", None):
        adv["strategy"] = args.strategy
    if getattr(args, "fraction", None) is not None:
        adv["fraction"] = args.fraction
    if "tau_up" in sim and "tau_down" not in sim:
        sim["tau_down"] = sim["tau_up"] / 2
    if adv.get("strategy") not in (None, "none"):
        sim["adversary"] = AdversaryConfig(adv["strategy"], float(adv.get("fraction", 0.05)))
    trc.setdefault("seed", sim.get("seed", 0))
    if "days" in sim:
        trc.setdefault("n_days", sim["days"])
    try:
        return SimulationConfig(**sim), TraceConfig(**trc)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_trace(args, tcfg: TraceConfig) -> Trace:
    if args.trace:
        if not os.path.isdir(args.trace):
            raise UsageError(f"trace directory not found: {args.trace}")
        return Trace.load(args.trace)
    return generate_trace(tcfg)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _out_dir(args) -> str:
    d = args.out_dir or "."
    os.makedirs(d, exist_ok=True)
    return d


def _write(d: str, name: str, text: str):
    with open(os.path.join(d, name), "w", newline="") as fh:
        fh.write(text)


def _write_manifest(d: str, m: dict) -> str:
    digest = manifest_digest(m)
    _write(d, "manifest.json", json.dumps({**m, "digest": digest}, indent=1, sort_keys=True, default=str) + "\n")
    return digest


def _csv(rows: Sequence[dict], fields: Sequence[str], digest: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest={digest}\n")
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build(args) -> int:
    thr = Thresholds(args.tau_up or 40.0, args.tau_down or (args.tau_up or 40.0) / 2, args.n_supersets or 50)
    snap = None
    if args.fixture == "fig1":
        graph, guards = tree_graph(), tree_guards(args.fixture_bw)
    else:
        missing = [f for f in ("as_rel", "prefixes", "snapshot") if not getattr(args, f)]
        if missing:
            raise UsageError("build needs --as-rel, --prefixes and --snapshot (or --fixture fig1)")
        try:
            graph = load_as_rel(args.as_rel)
            with open(args.prefixes) as fh:
                pmap = parse_prefix_table(fh.read())
            with open(args.snapshot) as fh:
                text = fh.read()
            snap = parse_snapshot_csv(text) if args.snapshot.endswith(".csv") else parse_consensus(text)
        except OSError as e:
            raise UsageError(str(e)) from None
        labels = label_snapshot(snap, pmap)
        guards = {r.fingerprint: (labels[r.fingerprint], r.bandwidth_mbps)
                  for r in eligible_guards(snap, mode=args.eligibility)}
    d = _out_dir(args)
    m = manifest(SimulationConfig(design=args.design or AS, tau_up=thr.tau_up, tau_down=thr.tau_down,
                                  n_supersets=thr.n_supersets, seed=args.seed, clients=1),
                 extra={"command": "build", "fixture": args.fixture,
                        "inputs": [os.path.basename(p) for p in (args.as_rel, args.prefixes, args.snapshot) if p]})
    digest = _write_manifest(d, m)
    if (args.design or AS) == BW:
        state = initial_bw_state({fp: b for fp, (_, b) in guards.items()}, thr.tau_up, thr.tau_down)
        _write(d, "bwsets.json", state.to_json() + "\n")
        print(f"{len(state.sets)} BW sets, {len(state.leftover)} leftover quanta")
        return 0
    h, _ = full_update(None, guards, graph, thr, args.seed, 0)
    _write(d, "hierarchy.json", h.to_json() + "\n")
    _write(d, "g-lines.txt", emit_g_lines(h))
    if snap is not None:
        _write(d, "consensus-g.txt", format_consensus(snap, g_lines_by_guard(h)))
    n_ss, n_s, n_sub = h.counts()
    print(f"{n_ss} supersets, {n_s} sets, {n_sub} subsets; g-line overhead {g_line_overhead(h)} bytes")
    return 0


def cmd_gen_trace(args) -> int:
    raw = read_config(args.config) if args.config else {}
    _, tcfg = configs_from(raw, args)
    if args.guards is not None:
        tcfg.n_guards = args.guards
    d = _out_dir(args)
    tr = generate_trace(tcfg)
    tr.write(d)
    _write_manifest(d, {"tool": "guardsets", "command": "gen-trace", "trace": tcfg.to_dict()})
    print(f"{tr.n_days} days, {len(tr.fingerprints)} guards over the run, written to {d}")
    return 0


def cmd_simulate(args) -> int:
    raw = read_config(args.config) if args.config else {}
    cfg, tcfg = configs_from(raw, args)
    if cfg.adversary is not None and cfg.adversary.strategy == TARGETED:
        raise UsageError("use the attack command for the targeted strategy")
    tr = _load_trace(args, tcfg)
    d = _out_dir(args)
    digest = _write_manifest(d, manifest(cfg, tr.config.to_dict(), {"command": "simulate"}))
    res = run_simulation(cfg, tr)
    _write(d, "metrics.csv", res.metrics.to_csv(digest))
    last = res.metrics.records[-1]
    print(f"{cfg.design}: day {last['day']} compromised clients {last['compromised_client_fraction']:.4f}, "
          f"anonymity median {last['anon_median']:.0f}")
    return 0


def _attack_one(job):
    cfg, tcfg, trace_dir, n_targets = job
    tr = Trace.load(trace_dir) if trace_dir else generate_trace(tcfg)
    if cfg.adversary.strategy == TARGETED:
        out = run_targeted(cfg, tr, n_targets)
        return [{"seed": cfg.seed, "target": o.target,
                 "compromise_day": "" if o.compromise_day is None else o.compromise_day,
                 "cost_mbps": o.cost_mbps} for o in out]
    res = run_simulation(cfg, tr)
    return [{"seed": cfg.seed, "day": r["day"], "compromised_client_fraction": r["compromised_client_fraction"],
             "compromised_set_fraction": r["compromised_set_fraction"],
             "adversary_bw_fraction": r["adversary_bw_fraction"]} for r in res.metrics.records]


def cmd_attack(args) -> int:
    raw = read_config(args.config) if args.config else {}
    cfg, tcfg = configs_from(raw, args)
    if cfg.adversary is None:
        raise UsageError("attack needs --strategy")
    jobs = []
    for k in range(args.seeds):
        seed = cfg.seed + k
        c = dataclasses.replace(cfg, seed=seed)
        t = dataclasses.replace(tcfg, seed=tcfg.seed + k if args.vary_trace else tcfg.seed)
        jobs.append((c, t, args.trace, args.targets))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            parts = list(ex.map(_attack_one, jobs))
    else:
        parts = [_attack_one(j) for j in jobs]
    rows = [r for p in parts for r in p]
    d = _out_dir(args)
    digest = _write_manifest(d, manifest(cfg, tcfg.to_dict(), {"command": "attack", "seeds": args.seeds,
                                                               "vary_trace": args.vary_trace,
                                                               "targets": args.targets}))
    if cfg.adversary.strategy == TARGETED:
        _write(d, "targets.csv", _csv(rows, ["seed", "target", "compromise_day", "cost_mbps"], digest))
        hit = sum(1 for r in rows if r["compromise_day"] != "")
        print(f"{hit}/{len(rows)} targets compromised")
    else:
        _write(d, "compromise.csv", _csv(rows, ["seed", "day", "compromised_client_fraction",
                                                "compromised_set_fraction", "adversary_bw_fraction"], digest))
        finals = [p[-1]["compromised_client_fraction"] for p in parts]
        print(f"{cfg.adversary.strategy}: median final compromised clients {float(np.median(finals)):.4f}")
    return 0


def cmd_pathsec(args) -> int:
    raw = read_config(args.config) if args.config else {}
    cfg, tcfg = configs_from(raw, args)
    if not args.paths:
        raise UsageError("pathsec needs --paths")
    try:
        with open(args.paths) as fh:
            oracle = AsPathOracle.from_csv(fh.read())
        table = None
        if args.exit_table:
            with open(args.exit_table) as fh:
                table = ExitProbabilityTable.from_csv(fh.read())
    except OSError as e:
        raise UsageError(str(e)) from None
    if args.denasa and table is None:
        raise UsageError("--denasa needs --exit-table")
    tr = _load_trace(args, tcfg)
    guards = tr.guards_as(0)
    asn_of = {fp: a for fp, (a, _) in guards.items()}
    if cfg.design == AS:
        state, _ = full_update(None, guards, tr.graph, cfg.thresholds, cfg.seed, 0)
    elif cfg.design == BW:
        state = initial_bw_state(tr.guards_bw(0), cfg.tau_up, cfg.tau_down)
    else:
        state = tr.guards_bw(0)
    options = guard_set_options(cfg.design, state, asn_of)
    clients = [int(x) for x in args.client_asns.split(",")]
    dests = [int(x) for x in args.dest_asns.split(",")]
    streams = [(c, d) for c in range(len(clients)) for d in dests]
    exits = [(a, b) for _, a, _, b in tr.exits if a is not None]
    pcfg = PathSecConfig(exits=exits, denasa=args.denasa, suspects=SuspectConfig(), table=table,
                         mode=args.mode, samples=args.samples, seed=cfg.seed)
    res = vulnerable_stream_rate(clients, streams, options, oracle, pcfg)
    d = _out_dir(args)
    digest = _write_manifest(d, manifest(cfg, tr.config.to_dict(), {"command": "pathsec", "denasa": args.denasa,
                                                                    "mode": args.mode}))
    rows = [{"client_asn": clients[c], "rate": "" if r is None else float(r), "skipped": float(res.skipped[c])}
            for c, r in res.rates.items()]
    _write(d, "pathsec.csv", _csv(rows, ["client_asn", "rate", "skipped"], digest))
    print(f"median vulnerable-stream rate {res.median():.4f} over {len(clients)} clients")
    return 0


def _read_metrics(path: str) -> tuple[Optional[str], list[dict]]:
    with open(path) as fh:
        text = fh.read()
    ref = None
    lines = text.splitlines()
    if lines and lines[0].startswith("# manifest="):
        ref = lines[0].split("=", 1)[1]
    body = "\n".join(ln for ln in lines if not ln.startswith("#"))
    return ref, list(csv.DictReader(io.StringIO(body)))


def cmd_report(args) -> int:
    if not args.metrics:
        raise UsageError("report needs at least one metrics CSV")
    rows, series = [], []
    for path in args.metrics:
        if not os.path.exists(path):
            raise UsageError(f"no such file: {path}")
        ref, recs = _read_metrics(path)
        if not recs:
            raise UsageError(f"{path}: no rows")
        if "compromised_client_fraction" not in recs[0] or "repairs" not in recs[0]:
            raise UsageError(f"{path}: not a metrics file")
        first, last = recs[0], recs[-1]
        c0 = float(recs[min(1, len(recs) - 1)]["compromised_client_fraction"])
        c1 = float(last["compromised_client_fraction"])
        rows.append({
            "file": os.path.relpath(path), "manifest": ref or "", "design": first["design"],
            "days": len(recs), "final_compromised_clients": c1,
            "growth_from_day2": (c1 - c0) / c0 if c0 > 0 else 0.0,
            "mean_repairs": float(np.mean([float(r["repairs"]) for r in recs])),
            "mean_anon_median": float(np.mean([float(r["anon_median"]) for r in recs])),
            "mean_set_bw_median": float(np.mean([float(r["set_bw_median"]) for r in recs])),
            "final_n_subsets": int(last["n_subsets"]),
        })
        for r in recs:
            series.append({"file": os.path.relpath(path), "day": int(r["day"]),
                           "compromised_client_fraction": float(r["compromised_client_fraction"]),
                           "repairs": int(r["repairs"]), "anon_median": float(r["anon_median"])})
    d = _out_dir(args)
    digest = _write_manifest(d, {"tool": "guardsets", "command": "report",
                                 "inputs": [r["manifest"] for r in rows]})
    _write(d, "summary.csv", _csv(rows, list(rows[0]), digest))
    _write(d, "series.csv", _csv(series, list(series[0]), digest))
    w = max(len(r["file"]) for r in rows)
    print(f"{'file':<{w}}  design  days  final   growth  repairs/day")
    for r in rows:
        print(f"{r['file']:<{w}}  {r['design']:<6}  {r['days']:>4}  {r['final_compromised_clients']:.4f}  "
              f"{r['growth_from_day2']:+.3f}  {r['mean_repairs']:.2f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p, sim=True):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir")
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--jobs", type=int, default=1)
    if sim:
        p.add_argument("--trace", help="trace directory written by gen-trace")
        p.add_argument("--design", choices=DESIGNS)
        p.add_argument("--tau-up", type=float)
        p.add_argument("--tau-down", type=float)
        p.add_argument("--n-supersets", type=int)
        p.add_argument("--clients", type=int)
        p.add_argument("--days", type=int)
        p.add_argument("--strategy", choices=STRATEGIES + ("none",))
        p.add_argument("--fraction", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="guardsets", description="AS-aware guard set experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="hierarchy (or BW sets) from one snapshot")
    _common(p, sim=False)
    p.add_argument("--as-rel")
    p.add_argument("--prefixes")
    p.add_argument("--snapshot", help="snapshot CSV or consensus text")
    p.add_argument("--fixture", choices=["fig1"])
    p.add_argument("--fixture-bw", type=float, default=10.0)
    p.add_argument("--eligibility", choices=["consensus", "synthetic"], default="consensus")
    p.add_argument("--design", choices=[AS, BW])
    p.add_argument("--tau-up", type=float)
    p.add_argument("--tau-down", type=float)
    p.add_argument("--n-supersets", type=int)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("simulate", help="one simulation run")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", help="adversary scenario over several seeds")
    _common(p)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--targets", type=int, default=25, help="targets per seed (targeted strategy)")
    p.add_argument("--vary-trace", action="store_true", help="new synthetic trace per seed")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("pathsec", help="vulnerable-stream rates over an AS path table")
    _common(p)
    p.add_argument("--paths", help="CSV src_asn,dst_asn,path")
    p.add_argument("--exit-table", help="CSV exit_asn,<suspect asns...>")
    p.add_argument("--client-asns", required=True)
    p.add_argument("--dest-asns", required=True)
    p.add_argument("--denasa", action="store_true")
    p.add_argument("--mode", choices=["exact", "sampled"], default="sampled")
    p.add_argument("--samples", type=int, default=100)
    p.set_defaults(func=cmd_pathsec)

    p = sub.add_parser("gen-trace", help="write a synthetic trace")
    _common(p, sim=False)
    p.add_argument("--guards", type=int)
    p.add_argument("--days", type=int)
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("report", help="summarize metrics CSVs")
    p.add_argument("metrics", nargs="*")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", 0) is None:
        args.seed = None if args.command != "build" else 0
    try:
        return args.func(args)
    except UsageError as e:
        ap.error(str(e))   # exits with status 2
    except (AsRelParseError, SnapshotParseError, PathTableError, ValueError) as e:
        print(f"guardsets: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
