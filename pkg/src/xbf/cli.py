"""Command-line entry point: ``xbf <command> [options]``.

Every option can also come from a TOML run descriptor given with
``--config``; descriptor keys are the long option names with dashes
replaced by underscores, and explicit flags override the file.  Each
output file gets a ``<file>.provenance.json`` sibling.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .bloom import UnsatisfiableError, min_filter_length
from .graph import NetworkGraph, UnpartitionableError, format_edge_list
from .header import build_header, compress_zbf, serialize
from .partition import PartitionConfig, Partitioning, quality
from .sim import (
    ExperimentConfig,
    deliver_xbf,
    partition_network,
    run_experiment,
    sample_tree,
    trial_rng,
    write_metrics_csv,
    write_summary_json,
)
from .topo import TopoSpec, TrafficModel, build_topology
from .trees import build_multicast_tree

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("xbf")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "jobs": 1,
    "out": None,
    "ba": None,
    "er": None,
    "sized": None,
    "edges": None,
    "symmetrize": False,
    "scheme": "xbf",
    "partitioner": "jigsaw",
    "partition_size": 256,
    "imbalance": 1.1,
    "traffic_blind": False,
    "weighting": "traffic",
    "traffic": "uniform",
    "demand_fraction": 0.1,
    "demand_multiplier": 10.0,
    "traffic_trials": 5,
    "sinks": [1, 10, 20],
    "trials": 1000,
    "classical_m": 256,
    "k_rule": "optimal",
    "p": [0.95, 0.99],
    "source": None,
    "partitioning": None,
    "compress": False,
}


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _add_topology(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("topology")
    g.add_argument("--ba", nargs=2, type=int, metavar=("N", "M"), help="Barabási-Albert graph")
    g.add_argument("--er", nargs="+", type=float, metavar="N [P]", help="Erdős-Rényi graph (P defaults to 1.1 ln N / N)")
    g.add_argument("--sized", nargs=2, type=int, metavar=("N", "LINKS"), help="connected graph of exact size")
    g.add_argument("--edges", metavar="FILE", help="edge-list file")
    g.add_argument("--symmetrize", action="store_true", default=None, help="add missing reverse links")


def _add_partition(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("partitioning")
    g.add_argument("--partitioner", choices=("jigsaw", "powergraph"))
    g.add_argument("--partition-size", type=int, help="links per partition (filter bits)")
    g.add_argument("--imbalance", type=float, help="partition-count multiplier")
    g.add_argument("--traffic-blind", action="store_true", default=None, help="uniform link weights")
    g.add_argument("--weighting", choices=("traffic", "betweenness"))
    g.add_argument("--traffic", choices=("uniform", "high_demand", "spatial_cluster"))
    g.add_argument("--demand-fraction", type=float)
    g.add_argument("--demand-multiplier", type=float)
    g.add_argument("--traffic-trials", type=int, help="traffic-synthesis trees per node")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xbf", description="XBF source-routing toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="TOML", help="run descriptor")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file or directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a topology edge list")
    _add_topology(p)

    p = sub.add_parser("partition", parents=[common], help="partition a topology")
    _add_topology(p)
    _add_partition(p)

    p = sub.add_parser("headers", parents=[common], help="build and serialize one XBF header")
    _add_topology(p)
    _add_partition(p)
    p.add_argument("--partitioning", metavar="JSON", help="reuse a saved partitioning")
    p.add_argument("--source", type=int)
    p.add_argument("--sinks", type=_int_list, metavar="A,B,...", help="sink node ids")
    p.add_argument("--compress", action="store_true", default=None)

    p = sub.add_parser("simulate", parents=[common], help="run a delivery campaign")
    _add_topology(p)
    _add_partition(p)
    p.add_argument("--scheme", choices=("xbf", "classical"))
    p.add_argument("--sinks", type=_int_list, metavar="S1,S2,...")
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--classical-m", type=int)
    p.add_argument("--k-rule", choices=("optimal", "fixed5"))

    p = sub.add_parser("lps", parents=[common], help="minimum classical filter lengths")
    _add_topology(p)
    p.add_argument("--sinks", type=_int_list, metavar="S1,S2,...")
    p.add_argument("-p", type=_float_list, metavar="P1,P2,...", help="success fractions")
    p.add_argument("--trials", type=int)
    p.add_argument("--k-rule", choices=("optimal", "fixed5"))

    p = sub.add_parser("compare", parents=[common], help="Jigsaw vs Powergraph on one topology")
    _add_topology(p)
    _add_partition(p)
    p.add_argument("--sinks", type=_int_list, metavar="S1,S2,...")
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, the TOML descriptor, then explicit flags."""
    opts = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"descriptor {path} not found")
        with open(path, "rb") as fh:
            desc = tomllib.load(fh)
        unknown = set(desc) - set(DEFAULTS)
        if unknown:
            raise CliError(f"unknown descriptor keys: {', '.join(sorted(unknown))}")
        opts.update(desc)
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            opts[key] = value
    for key in ("sinks", "p"):
        if isinstance(opts[key], (int, float)):
            opts[key] = [opts[key]]
    return opts


# --------------------------------------------------------------------------
# building blocks


def topo_spec(opts: dict) -> TopoSpec:
    chosen = [k for k in ("ba", "er", "sized", "edges") if opts.get(k) is not None]
    if len(chosen) != 1:
        raise CliError("give exactly one of --ba, --er, --sized, --edges")
    kind = chosen[0]
    seed = int(opts["seed"])
    if kind == "ba":
        n, m = opts["ba"]
        return TopoSpec("ba", n=int(n), m=int(m), seed=seed)
    if kind == "er":
        vals = list(opts["er"])
        if len(vals) not in (1, 2):
            raise CliError("--er takes N and optionally P")
        p = float(vals[1]) if len(vals) == 2 else None
        return TopoSpec("er", n=int(vals[0]), p=p, seed=seed)
    if kind == "sized":
        n, links = opts["sized"]
        return TopoSpec("sized", n=int(n), links=int(links), seed=seed)
    path = Path(opts["edges"])
    if not path.is_file():
        raise CliError(f"edge list {path} not found")
    return TopoSpec("file", path=str(path), seed=seed, symmetrize=bool(opts["symmetrize"]))


def traffic_model(opts: dict) -> TrafficModel:
    return TrafficModel(
        kind=opts["traffic"],
        fraction=float(opts["demand_fraction"]),
        multiplier=float(opts["demand_multiplier"]),
        seed=int(opts["seed"]),
    )


def experiment_config(opts: dict, **overrides) -> ExperimentConfig:
    fields = dict(
        topology=topo_spec(opts),
        sinks=tuple(int(s) for s in opts["sinks"]),
        trials=int(opts["trials"]),
        seed=int(opts["seed"]),
        scheme=opts["scheme"],
        traffic=traffic_model(opts),
        partitioner=opts["partitioner"],
        partition=PartitionConfig(
            max_partition_size=int(opts["partition_size"]),
            imbalance=float(opts["imbalance"]),
            seed=int(opts["seed"]),
            traffic_aware=not opts["traffic_blind"],
        ),
        weighting=opts["weighting"],
        traffic_trials_per_node=int(opts["traffic_trials"]),
        classical_m=int(opts["classical_m"]),
        k_rule=opts["k_rule"],
    )
    fields.update(overrides)
    return ExperimentConfig(**fields)


class Outputs:
    """Tracks written files so a failed command leaves nothing behind."""

    def __init__(self, command: str, opts: dict):
        self.command = command
        self.opts = opts
        self.written: list[Path] = []
        self.made_dirs: list[Path] = []

    def directory(self, default: str) -> Path:
        path = Path(self.opts["out"] or default)
        if not path.exists():
            path.mkdir(parents=True)
            self.made_dirs.append(path)
        elif not path.is_dir():
            raise CliError(f"{path} is not a directory")
        return path

    def _record(self, path: Path) -> None:
        self.written.append(path)

    def text(self, path: Path, content: str, extra: dict | None = None) -> None:
        self._record(path)
        path.write_text(content, encoding="utf-8")
        self._provenance(path, extra)

    def binary(self, path: Path, content: bytes, extra: dict | None = None) -> None:
        self._record(path)
        path.write_bytes(content)
        self._provenance(path, extra)

    def custom(self, path: Path, writer, extra: dict | None = None) -> None:
        self._record(path)
        writer(path)
        self._provenance(path, extra)

    def _provenance(self, path: Path, extra: dict | None) -> None:
        prov_path = path.with_name(path.name + ".provenance.json")
        self._record(prov_path)
        options = {k: v for k, v in self.opts.items() if v is not None and k != "out"}
        record = {"tool": "xbf", "version": __version__, "command": self.command, "options": options}
        if extra:
            record.update(extra)
        prov_path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def rollback(self) -> None:
        for path in reversed(self.written):
            path.unlink(missing_ok=True)
        for path in reversed(self.made_dirs):
            try:
                path.rmdir()
            except OSError:
                pass


def load_partitioning(g: NetworkGraph, path: str) -> Partitioning:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"partitioning {path} not found") from None
    return Partitioning.from_json(g, data)


# --------------------------------------------------------------------------
# commands


def cmd_gen(opts: dict, out: Outputs) -> None:
    spec = topo_spec(opts)
    g = build_topology(spec)
    path = Path(opts["out"] or f"{spec.name}.edges")
    header = f"{spec.name}: {g.n_nodes} nodes, {g.n_links} directed links"
    out.text(path, format_edge_list(g, header), {"topology": spec.to_dict(), "nodes": g.n_nodes, "links": g.n_links})
    log.info("wrote %s (%d links)", path, g.n_links)


def _partition_report(part: Partitioning) -> dict:
    q = quality(part)
    fill = part.fill()
    hist: dict[str, int] = {}
    for f in fill:
        lo = (f // 32) * 32
        key = f"{lo}-{lo + 31}"
        hist[key] = hist.get(key, 0) + 1
    return {
        "partitions": part.partition_count,
        "poppers": q.popper_count,
        "totalv": q.totalv,
        "max_fill": q.max_fill,
        "min_fill": q.min_fill,
        "fill": fill,
        "fill_histogram": dict(sorted(hist.items(), key=lambda kv: int(kv[0].split("-")[0]))),
    }


def cmd_partition(opts: dict, out: Outputs) -> None:
    cfg = experiment_config(opts)
    g = build_topology(cfg.topology)
    part = partition_network(g, cfg)
    report = _partition_report(part)
    directory = out.directory(f"partition-{cfg.topology.name}")
    extra = {"config_hash": cfg.config_hash()}
    out.text(directory / "partitioning.json", part.dumps() + "\n", extra)
    out.text(directory / "quality.json", json.dumps(report, indent=2) + "\n", extra)
    print(
        f"partitions={report['partitions']} poppers={report['poppers']} "
        f"totalv={report['totalv']:g} fill={report['min_fill']}..{report['max_fill']}"
    )


def cmd_headers(opts: dict, out: Outputs) -> None:
    cfg = experiment_config(opts)
    g = build_topology(cfg.topology)
    if opts["partitioning"]:
        part = load_partitioning(g, opts["partitioning"])
    else:
        part = partition_network(g, cfg)
    if opts["source"] is None:
        # no explicit tree: --sinks is read as a single sink count
        n_sinks = int(opts["sinks"][0]) if len(opts["sinks"]) == 1 else 10
        tree = sample_tree(g, n_sinks, trial_rng(cfg.seed, n_sinks, 0))
    else:
        tree = build_multicast_tree(g, int(opts["source"]), [int(s) for s in opts["sinks"]])
    header = build_header(tree, part)
    trace = deliver_xbf(g, part, tree, header)
    data = serialize(header, compress=bool(opts["compress"]))
    info = {
        "source": tree.source,
        "sinks": sorted(tree.sinks),
        "tree_links": sorted(tree.links),
        "partition_count": header.partition_count,
        "present": list(header.present),
        "hdr_bits": header.size_bits(),
        "hdr_bits_compressed": header.m + header.partition_count + compress_zbf(header).bit_length,
        "wire_bytes": len(data),
        "compressed_wire": bool(opts["compress"]),
        "pops": len(trace.pops),
        "delivered": sorted(trace.delivered),
    }
    directory = out.directory("header")
    out.binary(directory / "header.bin", data)
    out.text(directory / "header.json", json.dumps(info, indent=2) + "\n")
    print(data.hex())


def cmd_simulate(opts: dict, out: Outputs) -> None:
    cfg = experiment_config(opts)
    result = run_experiment(cfg, jobs=int(opts["jobs"]))
    directory = out.directory(f"sim-{cfg.topology.name}-{cfg.config_hash()}")
    extra = {"config_hash": cfg.config_hash()}
    out.custom(directory / "metrics.csv", lambda p: write_metrics_csv(result.rows, p), extra)
    out.custom(directory / "summary.json", lambda p: write_summary_json(result.summary, p), extra)
    for s, stats in result.summary["by_sinks"].items():
        print(
            f"sinks={s} hdr={stats['hdr_bits']['mean']:.1f} "
            f"hdr_compressed={stats['hdr_bits_compressed']['mean']:.1f} "
            f"pops={stats['pops']['mean']:.2f} false_firings={stats['false_firings']['mean']:.3f}"
        )


def cmd_lps(opts: dict, out: Outputs) -> None:
    spec = topo_spec(opts)
    g = build_topology(spec)
    sinks = [int(s) for s in opts["sinks"]]
    ps = [float(p) for p in opts["p"]]
    rows = []
    for p in ps:
        row = {"p": p}
        for s in sinks:
            try:
                row[f"s={s}"] = min_filter_length(g, s, p, opts["k_rule"], int(opts["trials"]), int(opts["seed"]))
            except UnsatisfiableError:
                row[f"s={s}"] = ""
            log.info("L_%g(%d) = %s", p, s, row[f"s={s}"])
        rows.append(row)

    def write(path: Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["p"] + [f"s={s}" for s in sinks])
            w.writeheader()
            w.writerows(rows)

    path = Path(opts["out"] or f"lps-{spec.name}.csv")
    out.custom(path, write, {"topology": spec.to_dict()})
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))


def cmd_compare(opts: dict, out: Outputs) -> None:
    base = experiment_config(opts)
    results = {}
    for name in ("jigsaw", "powergraph"):
        cfg = experiment_config(opts, partitioner=name)
        g = build_topology(cfg.topology)
        part = partition_network(g, cfg)
        report = _partition_report(part)
        sim = run_experiment(cfg, jobs=int(opts["jobs"]))
        results[name] = {
            "partitions": report["partitions"],
            "poppers": report["poppers"],
            "totalv": report["totalv"],
            "by_sinks": {s: {k: v["mean"] for k, v in stats.items()} for s, stats in sim.summary["by_sinks"].items()},
        }
    path = Path(opts["out"] or f"compare-{base.topology.name}.json")
    out.text(path, json.dumps(results, indent=2) + "\n", {"config_hash": base.config_hash()})
    for name, r in results.items():
        pops = " ".join(f"pops@{s}={v['pops']:.2f}" for s, v in r["by_sinks"].items())
        print(f"{name}: partitions={r['partitions']} poppers={r['poppers']} totalv={r['totalv']:g} {pops}")


COMMANDS = {
    "gen": cmd_gen,
    "partition": cmd_partition,
    "headers": cmd_headers,
    "simulate": cmd_simulate,
    "lps": cmd_lps,
    "compare": cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("XBF_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    out: Outputs | None = None
    try:
        opts = resolve(args)
        out = Outputs(args.command, opts)
        COMMANDS[args.command](opts, out)
    except (CliError, ValueError, OSError, UnpartitionableError, tomllib.TOMLDecodeError) as exc:
        if out is not None:
            out.rollback()
        print(f"xbf {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        if out is not None:
            out.rollback()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
