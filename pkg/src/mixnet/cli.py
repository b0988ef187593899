"""Command-line surface: simulate -> learn -> eval, with reproducible outputs.

All outputs are plain text (CSV/TSV/JSON, UTF-8, LF line endings) and every
command writes a manifest echoing its full configuration, so any run can be
re-executed from the manifest alone. Exit codes are stable: 0 success,
1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import (
    ChainStuckError,
    DivergentSpecError,
    IngestError,
    InvalidInputError,
    InvalidSpecError,
    MixnetError,
    RankDeficiencyError,
)
from .evaluation import auc, f1, is_degenerate, roc
from .glm import Dataset, Kind, ScoreConfig
from .graph import Graph, NeighbourhoodSet, combine, graph_diff
from .mcmc import ChainConfig, _chain_task, inclusion_probabilities
from .sim import (
    DEFAULT_GIBBS_BURN_IN,
    DEFAULT_GIBBS_THIN,
    MixedModelSpec,
    gen_random,
    gen_scale_free,
    gen_spec,
    gibbs_sample,
    sample_gaussian,
)

_MISSING_TOKENS = {"", "na", "nan"}


# ---------------------------------------------------------------------------
# ingestion and serialization helpers
# ---------------------------------------------------------------------------

def _parse_header(cells: list[str]) -> tuple[list[str], list[Kind]]:
    names, kinds = [], []
    for j, cell in enumerate(cells):
        parts = cell.strip().split(":")
        if len(parts) != 2 or not parts[0]:
            raise IngestError(
                f"header cell {j + 1} must look like 'name:kind', got {cell!r}"
            )
        name, code = parts
        try:
            kinds.append(Kind(code))
        except ValueError:
            raise IngestError(
                f"column {name!r} has unknown kind {code!r} (expected g, b or c)"
            ) from None
        names.append(name)
    if len(set(names)) != len(names):
        raise IngestError("duplicate column names in header")
    return names, kinds


def read_dataset(
    path: str | Path,
    log_transform: tuple[str, ...] = (),
    standardize: bool = False,
) -> tuple[Dataset, list[str]]:
    """Read a typed CSV (header cells ``name:kind``) into a Dataset.

    ``log_transform`` names Gaussian columns to log before use; rejects
    missing values, type violations, and non-positive values under the log,
    each addressed by row and column.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        names, kinds = _parse_header(header)
        rows = []
        missing = 0
        first_missing = None
        for r, row in enumerate(reader, start=1):
            if len(row) != len(names):
                raise IngestError(
                    f"{path}: row {r} has {len(row)} cells, expected {len(names)}"
                )
            parsed = []
            for j, cell in enumerate(row):
                text = cell.strip()
                if text.lower() in _MISSING_TOKENS:
                    missing += 1
                    if first_missing is None:
                        first_missing = (r, names[j])
                    parsed.append(math.nan)
                    continue
                try:
                    value = float(text)
                except ValueError:
                    raise IngestError(
                        f"{path}: row {r}, column {names[j]!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise IngestError(
                        f"{path}: row {r}, column {names[j]!r}: non-finite value"
                    )
                kind = kinds[j]
                if kind is Kind.BINARY and value not in (0.0, 1.0):
                    raise IngestError(
                        f"{path}: row {r}, column {names[j]!r}: binary value must be 0 or 1, got {cell}"
                    )
                if kind is Kind.COUNT and (value < 0 or value != math.floor(value)):
                    raise IngestError(
                        f"{path}: row {r}, column {names[j]!r}: count value must be a non-negative integer, got {cell}"
                    )
                parsed.append(value)
            rows.append(parsed)
    if missing:
        r, name = first_missing
        raise IngestError(
            f"{path}: {missing} missing value(s), first at row {r}, column {name!r}"
        )
    if not rows:
        raise IngestError(f"{path}: no data rows")
    values = np.array(rows, dtype=float)

    for name in log_transform:
        if name not in names:
            raise IngestError(f"--log-transform: no column named {name!r}")
        j = names.index(name)
        if kinds[j] is not Kind.GAUSSIAN:
            raise IngestError(f"--log-transform: column {name!r} is not Gaussian")
        col = values[:, j]
        if (col <= 0).any():
            r = int(np.flatnonzero(col <= 0)[0]) + 1
            raise IngestError(
                f"--log-transform: column {name!r} has a non-positive value at row {r}"
            )
        values[:, j] = np.log(col)
    if standardize:
        for j, kind in enumerate(kinds):
            if kind is not Kind.GAUSSIAN:
                continue
            sd = float(values[:, j].std())
            if sd == 0.0:
                raise IngestError(
                    f"--standardize: column {names[j]!r} is constant"
                )
            values[:, j] = (values[:, j] - values[:, j].mean()) / sd
    return Dataset(values=values, kinds=tuple(kinds)), names


def write_dataset(path: Path, data: Dataset, names: list[str]) -> None:
    lines = [",".join(f"{n}:{k.value}" for n, k in zip(names, data.kinds))]
    for row in data.values:
        cells = []
        for x, kind in zip(row, data.kinds):
            if kind is Kind.GAUSSIAN:
                cells.append(format(x, ".10g"))
            else:
                cells.append(str(int(x)))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def write_edges(path: Path, graph: Graph) -> None:
    path.write_text("".join(f"{u}\t{v}\n" for u, v in graph.sorted_edges()))


def read_edges(path: str | Path, p: int) -> Graph:
    path = Path(path)
    pairs = []
    for i, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise IngestError(f"{path}: line {i}: expected 'u<TAB>v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise IngestError(f"{path}: line {i}: non-integer vertex") from None
        if not (0 <= u < p and 0 <= v < p):
            raise IngestError(f"{path}: line {i}: vertex out of range for p={p}")
        if u == v:
            raise IngestError(f"{path}: line {i}: self loop on {u}")
        pairs.append((u, v))
    return Graph.from_edges(p, pairs)


def write_inclusion(path: Path, matrix: np.ndarray) -> None:
    lines = [",".join(f"{x:.6f}" for x in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n")


def read_inclusion(path: str | Path) -> np.ndarray:
    matrix = np.loadtxt(path, delimiter=",", ndmin=2)
    if matrix.shape[0] != matrix.shape[1]:
        raise IngestError(f"{path}: inclusion matrix must be square, got {matrix.shape}")
    if ((matrix < 0) | (matrix > 1)).any():
        raise IngestError(f"{path}: inclusion probabilities must lie in [0, 1]")
    return matrix


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, config: dict, started: float, **extra) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": config.get("seed"),
        "duration_s": round(time.monotonic() - started, 3),
    }
    payload.update(extra)
    _write_json(out / "manifest.json", payload)


def _spec_payload(spec: MixedModelSpec) -> dict:
    edges = sorted(spec.edge_params)
    return {
        "p": spec.p,
        "kinds": [k.value for k in spec.kinds],
        "node_params": [float(x) for x in spec.node_params],
        "edges": [[u, v, spec.edge_params[(u, v)]] for u, v in edges],
    }


def _parse_kinds(text: str, p: int) -> tuple[Kind, ...]:
    if not re.fullmatch(r"(?:[gbc]\d+)+", text):
        raise click.BadParameter(
            f"kinds must look like 'g25b15c10', got {text!r}", param_hint="--kinds"
        )
    kinds: list[Kind] = []
    for code, count in re.findall(r"([gbc])(\d+)", text):
        kinds.extend([Kind(code)] * int(count))
    if len(kinds) != p:
        raise click.BadParameter(
            f"kinds spell out {len(kinds)} variables but --p is {p}", param_hint="--kinds"
        )
    return tuple(kinds)


def _child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, threads)
    env = os.environ.get("MIXNET_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise click.BadParameter(
                f"MIXNET_THREADS must be an integer, got {env!r}", param_hint="--threads"
            ) from None
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
@click.version_option(version=__version__, prog_name="mixnet")
def cli():
    """Structure learning for mixed graphical models."""


@cli.command()
@click.option("--topology", type=click.Choice(["scalefree", "random"]), required=True)
@click.option("--p", "p", type=int, required=True, help="Number of variables.")
@click.option("--kinds", "kinds_text", default=None, help="Kind counts, e.g. g25b15c10 (default: all Gaussian).")
@click.option("--edge-prob", type=float, default=0.04, show_default=True, help="Edge probability for --topology random.")
@click.option("--n", "n", type=int, required=True, help="Rows per replicate.")
@click.option("--reps", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gibbs-burnin", type=int, default=DEFAULT_GIBBS_BURN_IN, show_default=True)
@click.option("--gibbs-thin", type=int, default=DEFAULT_GIBBS_THIN, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def simulate(topology, p, kinds_text, edge_prob, n, reps, seed, gibbs_burnin, gibbs_thin, out):
    """Generate a model and replicate datasets from it.

    Writes data_XXX.csv per replicate, the true edge list (truth.tsv), the
    generating parameters (spec.json), and a manifest. Gaussian-only models
    are sampled exactly from the implied multivariate normal; anything else
    goes through the Gibbs sampler.
    """
    started = time.monotonic()
    if p < 2:
        raise click.BadParameter("need at least 2 variables", param_hint="--p")
    if n < 1:
        raise click.BadParameter("need at least 1 row", param_hint="--n")
    if reps < 1:
        raise click.BadParameter("need at least 1 replicate", param_hint="--reps")
    kinds = _parse_kinds(kinds_text, p) if kinds_text else tuple([Kind.GAUSSIAN] * p)
    if topology == "scalefree":
        graph = gen_scale_free(p, _child_seed(seed, 0))
    else:
        graph = gen_random(p, edge_prob, _child_seed(seed, 0))
    spec = gen_spec(graph, kinds, _child_seed(seed, 1))
    all_gaussian = all(k is Kind.GAUSSIAN for k in kinds)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"v{j}" for j in range(p)]
    files = []
    for r in range(1, reps + 1):
        rep_seed = _child_seed(seed, 2, r)
        if all_gaussian:
            data = sample_gaussian(spec, n, rep_seed)
        else:
            data = gibbs_sample(spec, n, burn_in=gibbs_burnin, thin=gibbs_thin, seed=rep_seed)
        name = f"data_{r:03d}.csv"
        write_dataset(out / name, data, names)
        files.append(name)
    write_edges(out / "truth.tsv", graph)
    _write_json(out / "spec.json", _spec_payload(spec))
    config = {
        "topology": topology,
        "p": p,
        "kinds": kinds_text or f"g{p}",
        "edge_prob": edge_prob,
        "n": n,
        "reps": reps,
        "seed": seed,
        "gibbs_burnin": gibbs_burnin,
        "gibbs_thin": gibbs_thin,
        "out": str(out),
    }
    _write_manifest(out, "simulate", config, started,
                    outputs=files + ["truth.tsv", "spec.json"],
                    edge_count=len(graph.edges))
    click.echo(f"wrote {reps} dataset(s) with {len(graph.edges)} true edges to {out}", err=True)


@cli.command()
@click.argument("data_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--criterion", type=click.Choice(["bic", "ebic"]), default="ebic", show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True)
@click.option("--prior", type=click.Choice(["dm", "ny", "sb"]), default="dm", show_default=True)
@click.option("--prior-a", type=float, default=0.5, show_default=True)
@click.option("--iters", type=int, default=200, show_default=True)
@click.option("--burnin", type=int, default=50, show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--rule", type=click.Choice(["and", "or"]), default="and", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=None, help="Worker processes (default: MIXNET_THREADS or all cores).")
@click.option("--log-transform", "log_cols", default="", help="Comma-separated Gaussian columns to log.")
@click.option("--standardize", is_flag=True, help="Center/scale Gaussian columns.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def learn(data_path, criterion, gamma, prior, prior_a, iters, burnin, threshold, rule,
          seed, threads, log_cols, standardize, out):
    """Learn a graph from a typed CSV by per-vertex birth-death chains.

    Writes the estimated edge list (edges.tsv), the inclusion-probability
    matrix (inclusion.csv, one row per target vertex), and a manifest. A
    vertex whose chain gets stuck is reported, its inclusion row is zeroed,
    and the run continues; the exit code is then 3.
    """
    started = time.monotonic()
    log_transform = tuple(c for c in log_cols.split(",") if c)
    data, _ = read_dataset(data_path, log_transform=log_transform, standardize=standardize)
    score = ScoreConfig(criterion=criterion, gamma=gamma, prior=prior, prior_a=prior_a)
    config = ChainConfig(iterations=iters, burn_in=burnin, threshold=threshold, seed=seed, score=score)
    threads = _resolve_threads(threads)

    traces: dict[int, object] = {}
    failed: dict[int, str] = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {v: pool.submit(_chain_task, (v, data, config)) for v in range(data.p)}
            for v, fut in futures.items():
                try:
                    traces[v] = fut.result()
                except ChainStuckError as exc:
                    failed[v] = str(exc)
    else:
        for v in range(data.p):
            try:
                traces[v] = _chain_task((v, data, config))
            except ChainStuckError as exc:
                failed[v] = str(exc)

    matrix = np.zeros((data.p, data.p))
    for v, trace in traces.items():
        matrix[v] = inclusion_probabilities(trace, data.p)
    neighbourhoods = [
        NeighbourhoodSet(v, frozenset(np.flatnonzero(matrix[v] >= threshold).tolist()))
        for v in range(data.p)
    ]
    graph = combine(neighbourhoods, rule)

    out.mkdir(parents=True, exist_ok=True)
    write_edges(out / "edges.tsv", graph)
    write_inclusion(out / "inclusion.csv", matrix)
    flag_config = {
        "data": str(data_path),
        "criterion": criterion,
        "gamma": gamma,
        "prior": prior,
        "prior_a": prior_a,
        "iters": iters,
        "burnin": burnin,
        "threshold": threshold,
        "rule": rule,
        "seed": seed,
        "threads": threads,
        "log_transform": log_cols,
        "standardize": standardize,
        "out": str(out),
    }
    _write_manifest(
        out, "learn", flag_config, started,
        outputs=["edges.tsv", "inclusion.csv"],
        jumps_per_node=[config.iterations if v in traces else 0 for v in range(data.p)],
        failed_vertices={str(v): msg for v, msg in sorted(failed.items())},
        edge_count=len(graph.edges),
    )
    for v, msg in sorted(failed.items()):
        click.echo(f"warning: {msg}", err=True)
    click.echo(f"wrote {len(graph.edges)} edge(s) to {out}", err=True)
    if failed:
        raise click.exceptions.Exit(3)


@cli.command("eval")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--p", "p", type=int, required=True, help="Number of variables behind the edge lists.")
@click.option("--estimate", "estimates", type=click.Path(exists=True, dir_okay=False), multiple=True)
@click.option("--inclusion", "inclusion_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--roc", "want_roc", is_flag=True, help="Write an ROC sweep of the inclusion matrix.")
@click.option("--rule", type=click.Choice(["and", "or"]), default="and", show_default=True)
@click.option("--grid-size", type=int, default=101, show_default=True, help="Thresholds in the ROC grid.")
@click.option("--batch", is_flag=True, help="Average F1 over all --estimate files.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
def evaluate(truth_path, p, estimates, inclusion_path, want_roc, rule, grid_size, batch, out):
    """Score estimates against a true edge list.

    With --estimate: confusion counts and F1 into metrics.json (--batch adds
    mean/sd across files). With --inclusion and --roc: a threshold sweep into
    roc.csv plus the trapezoidal AUC into metrics.json.
    """
    started = time.monotonic()
    if p < 2:
        raise click.BadParameter("need at least 2 variables", param_hint="--p")
    truth = read_edges(truth_path, p)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    metrics: dict = {}

    if want_roc:
        if inclusion_path is None:
            raise click.UsageError("--roc requires --inclusion")
        matrix = read_inclusion(inclusion_path)
        if matrix.shape[0] != p:
            raise IngestError(
                f"inclusion matrix is {matrix.shape[0]}x{matrix.shape[1]} but --p is {p}"
            )
        if grid_size < 2:
            raise click.BadParameter("need at least 2 thresholds", param_hint="--grid-size")
        curve = roc(matrix, truth, rule=rule, grid=np.linspace(0.0, 1.0, grid_size))
        lines = ["threshold,tpr,fpr"]
        lines += [f"{pt.threshold:.6f},{pt.tpr:.6f},{pt.fpr:.6f}" for pt in curve.points]
        (out / "roc.csv").write_text("\n".join(lines) + "\n")
        outputs.append("roc.csv")
        metrics["auc"] = auc(curve)
    elif batch:
        if not estimates:
            raise click.UsageError("--batch requires at least one --estimate")
        scored = []
        for path in estimates:
            c = graph_diff(read_edges(path, p), truth)
            scored.append({"path": str(path), "tp": c.tp, "fp": c.fp, "fn": c.fn,
                           "tn": c.tn, "f1": f1(c)})
        values = [s["f1"] for s in scored]
        mean = sum(values) / len(values)
        sd = math.sqrt(sum((x - mean) ** 2 for x in values) / (len(values) - 1)) if len(values) > 1 else 0.0
        metrics = {"count": len(values), "f1_mean": mean, "f1_sd": sd, "estimates": scored}
    else:
        if len(estimates) != 1:
            raise click.UsageError("provide exactly one --estimate (or use --batch / --roc)")
        c = graph_diff(read_edges(estimates[0], p), truth)
        metrics = {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
                   "f1": f1(c), "degenerate": is_degenerate(c)}

    _write_json(out / "metrics.json", metrics)
    outputs.append("metrics.json")
    config = {
        "truth": str(truth_path),
        "p": p,
        "estimates": [str(e) for e in estimates],
        "inclusion": str(inclusion_path) if inclusion_path else None,
        "roc": want_roc,
        "rule": rule,
        "grid_size": grid_size,
        "batch": batch,
        "seed": None,
        "out": str(out),
    }
    _write_manifest(out, "eval", config, started, outputs=outputs)
    click.echo(f"wrote {', '.join(outputs)} to {out}", err=True)


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, prog_name="mixnet", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (IngestError, InvalidInputError, InvalidSpecError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (RankDeficiencyError, ChainStuckError, DivergentSpecError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except MixnetError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0
