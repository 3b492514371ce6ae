"""Experiment orchestration: training, baselines, comparisons and their CSV outputs.

Every scheme is measured two ways:

* ``episodic``: mean over ``baseline.eval_episodes`` fresh episodes of
  ``ce.episode_length`` slots, each from the empty initial state (the setting
  the policies are trained in);
* ``long_run``: one trajectory of ``baseline.long_run_slots`` slots.

Within a seed all schemes share the same random streams, so comparisons use
common random arrivals.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .baselines import run_pure_csma, run_whittle_oracle, whittle_oracle_episodes
from .ce import IterationRecord, TrainResult, train
from .config import ExperimentConfig
from .mac import BASELINE_STREAM, LONG_RUN_STREAM, run_episodes, run_long, stream
from .model import TerminalKind

log = logging.getLogger(__name__)

PROTOCOLS = ("episodic", "long_run")
METRICS = ((TerminalKind.AOI, "aoi_ms", "AoI (ms)"),
           (TerminalKind.QUEUE, "queue_length", "Queue-length"),
           (TerminalKind.IDT_EH, "inter_delivery_ms", "Inter-delivery time (ms)"))
SCHEME_LABELS = {"pure_csma": "Pure-CSMA", "isda": "ISDA", "whittle_oracle": "Whittle oracle"}


@dataclass
class SchemeMetrics:
    episodic: np.ndarray
    long_run: np.ndarray

    def get(self, protocol: str) -> np.ndarray:
        return getattr(self, protocol)


@dataclass
class SeedResult:
    seed: int
    schemes: Dict[str, SchemeMetrics]
    training: Optional[TrainResult] = None
    trace_rows: Optional[List[IterationRecord]] = None
    diverged: bool = False


def _eval_rngs(cfg: ExperimentConfig, seed: int):
    return [stream(seed, BASELINE_STREAM, 0, j) for j in range(cfg.baseline.eval_episodes)]


def evaluate_pure_csma(cfg: ExperimentConfig, seed: int) -> SchemeMetrics:
    sc = cfg.scenario
    probs = np.full(sc.n_terminals, cfg.p_const)
    avg, *_ = run_episodes(sc, probs, cfg.ce.episode_length, _eval_rngs(cfg, seed), workers=cfg.workers)
    long = run_pure_csma(sc, cfg.p_const, cfg.baseline.long_run_slots, stream(seed, LONG_RUN_STREAM))
    return SchemeMetrics(avg.mean(axis=0), long.per_terminal_avg_cost)


def evaluate_policy_schemes(cfg: ExperimentConfig, seed: int, policy) -> SchemeMetrics:
    sc, pol = cfg.scenario, cfg.policy
    e = cfg.baseline.eval_episodes
    params = [np.repeat(np.asarray(p)[None], e, axis=0) for p in policy]
    avg, *_ = run_episodes(sc, params, cfg.ce.episode_length, _eval_rngs(cfg, seed),
                           hidden_dim=pol.hidden_dim, norm=pol.norm, workers=cfg.workers)
    long = run_long(sc, list(policy), cfg.baseline.long_run_slots, stream(seed, LONG_RUN_STREAM),
                    hidden_dim=pol.hidden_dim, norm=pol.norm)
    return SchemeMetrics(avg.mean(axis=0), long.per_terminal_avg_cost)


def evaluate_whittle(cfg: ExperimentConfig, seed: int) -> SchemeMetrics:
    sc = cfg.scenario
    episodic = whittle_oracle_episodes(sc, cfg.ce.episode_length, _eval_rngs(cfg, seed)).mean(axis=0)
    long = run_whittle_oracle(sc, cfg.baseline.long_run_slots, stream(seed, LONG_RUN_STREAM))
    return SchemeMetrics(episodic, long.per_terminal_avg_cost)


def train_seed(cfg: ExperimentConfig, seed: int, progress=None):
    """Train one seed; returns ``(result or None, records, diverged)``."""
    records: List[IterationRecord] = []

    def collect(rec):
        records.append(rec)
        if progress is not None:
            progress(rec)

    try:
        result = train(cfg.scenario, cfg.ce, seed, hidden_dim=cfg.policy.hidden_dim,
                       norm=cfg.policy.norm, workers=cfg.workers, progress=collect)
    except FloatingPointError as exc:
        log.error("seed %d diverged: %s", seed, exc)
        return None, records, True
    return result, records, False


def run_seed(cfg: ExperimentConfig, seed: int, mode: Optional[str] = None, progress=None) -> SeedResult:
    mode = mode or cfg.mode
    schemes: Dict[str, SchemeMetrics] = {}
    training, records, diverged = None, None, False
    if mode in ("train", "compare"):
        training, records, diverged = train_seed(cfg, seed, progress)
    if mode in ("baseline", "compare"):
        schemes["pure_csma"] = evaluate_pure_csma(cfg, seed)
        if cfg.all_aoi:
            schemes["whittle_oracle"] = evaluate_whittle(cfg, seed)
    if mode == "compare" and training is not None:
        schemes["isda"] = evaluate_policy_schemes(cfg, seed, training.mean_policy)
    return SeedResult(seed, schemes, training, records, diverged)


# ---------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("refusing to write a non-finite value")
    return f"{v:.10g}"


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")


def trace_header(cfg: ExperimentConfig) -> list:
    cols = ["iteration", "sim_seconds", "mean_sampled_cost", "elite_mean_cost", "eval_cost"]
    cols += [f"eval_{i}_{t.kind.label}" for i, t in enumerate(cfg.scenario.terminals)]
    return cols + ["status"]


def trace_rows(cfg: ExperimentConfig, records: List[IterationRecord], diverged: bool) -> list:
    mac, hp = cfg.scenario.mac, cfg.ce
    width = len(trace_header(cfg))
    rows = []
    slots = 0
    minislots = 0
    for rec in records:
        slots += hp.episodes_per_iteration * hp.episode_length
        minislots += rec.minislots
        seconds = mac.elapsed_ms(slots, minislots) / 1000.0
        values = [rec.mean_sampled_cost, rec.elite_mean_cost, rec.eval_cost, *rec.eval_metrics]
        if not all(math.isfinite(v) for v in values[:2]):
            rows.append([_fmt(rec.iteration)] + [""] * (width - 2) + ["error"])
            continue
        cells = [_fmt(v) if math.isfinite(v) else "" for v in values]
        rows.append([_fmt(rec.iteration), _fmt(seconds), *cells, "ok"])
    if diverged:
        rows.append([_fmt(len(records) + 1)] + [""] * (width - 2) + ["error"])
    return rows


def category_means(cfg: ExperimentConfig, per_terminal: np.ndarray) -> Dict[str, Optional[float]]:
    """Average the per-terminal metric over terminals of each kind, time metrics in ms."""
    kinds = cfg.scenario.kinds
    ts = cfg.scenario.mac.data_slot_ms
    out: Dict[str, Optional[float]] = {}
    for kind, key, _ in METRICS:
        mask = kinds == int(kind)
        if not mask.any():
            out[key] = None
            continue
        v = float(np.mean(per_terminal[mask]))
        out[key] = v if kind is TerminalKind.QUEUE else v * ts
    return out


def improvement_pct(baseline: Optional[float], value: Optional[float]) -> Optional[float]:
    if baseline is None or value is None or baseline == 0:
        return None
    return 100.0 * (baseline - value) / baseline


def summarize(cfg: ExperimentConfig, results: List[SeedResult]) -> list:
    """Table rows ``(protocol, scheme, {metric: value})`` averaged over seeds."""
    rows = []
    names = [n for n in ("pure_csma", "isda", "whittle_oracle")
             if results and all(n in r.schemes for r in results)]
    for protocol in PROTOCOLS:
        means = {}
        for name in names:
            cats = [category_means(cfg, r.schemes[name].get(protocol)) for r in results]
            means[name] = {key: (None if cats[0][key] is None else float(np.mean([c[key] for c in cats])))
                           for _, key, _ in METRICS}
            rows.append((protocol, SCHEME_LABELS[name], means[name]))
        if "isda" in means:
            imp = {key: improvement_pct(means["pure_csma"][key], means["isda"][key]) for _, key, _ in METRICS}
            rows.append((protocol, "ISDA improvement (%)", imp))
    return rows


def summary_text(rows) -> str:
    header = ["protocol", "scheme"] + [label for _, _, label in METRICS]
    table = [header] + [[p, s] + ["-" if v[key] is None else f"{v[key]:.3f}" for _, key, _ in METRICS]
                        for p, s, v in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = []
    for j, r in enumerate(table):
        lines.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_seed_outputs(cfg: ExperimentConfig, res: SeedResult, out: Path) -> None:
    s = res.seed
    if res.trace_rows is not None:
        _write_csv(out / f"trace_seed{s}.csv", trace_header(cfg),
                   trace_rows(cfg, res.trace_rows, res.diverged))
    if res.training is not None:
        payload = {"seed": s, "terminals": [
            {"kind": t.kind.label, "mean": d.mean.tolist(), "variance": d.variance.tolist()}
            for t, d in zip(cfg.scenario.terminals, res.training.distributions)]}
        (out / f"policy_seed{s}.json").write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    if "pure_csma" in res.schemes and "isda" not in res.schemes:
        header = ["terminal", "kind", "pure_csma"]
        oracle = res.schemes.get("whittle_oracle")
        if oracle is not None:
            header += ["whittle_oracle", "csma_to_oracle_ratio"]
        rows = []
        for i, t in enumerate(cfg.scenario.terminals):
            c = res.schemes["pure_csma"].long_run[i]
            row = [i, t.kind.label, _fmt(c)]
            if oracle is not None:
                o = oracle.long_run[i]
                row += [_fmt(o), _fmt(c / o)]
            rows.append(row)
        _write_csv(out / f"baseline_seed{s}.csv", header, rows)
    if "isda" in res.schemes:
        header = ["terminal", "kind", "protocol", "pure_csma", "isda", "improvement_pct", "whittle_oracle"]
        rows = []
        for protocol in PROTOCOLS:
            for i, t in enumerate(cfg.scenario.terminals):
                c = res.schemes["pure_csma"].get(protocol)[i]
                v = res.schemes["isda"].get(protocol)[i]
                o = res.schemes.get("whittle_oracle")
                rows.append([i, t.kind.label, protocol, _fmt(c), _fmt(v), _fmt(improvement_pct(c, v)),
                             "" if o is None else _fmt(o.get(protocol)[i])])
        _write_csv(out / f"compare_seed{s}.csv", header, rows)


def write_summary(cfg: ExperimentConfig, results: List[SeedResult], out: Path) -> str:
    rows = summarize(cfg, results)
    _write_csv(out / "summary.csv", ["protocol", "scheme"] + [key for _, key, _ in METRICS],
               [[p, s] + [_fmt(v[key]) for _, key, _ in METRICS] for p, s, v in rows])
    text = summary_text(rows)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    return text


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = False) -> int:
    """Run every configured seed and write the outputs; returns a process exit code."""
    if cfg.mode == "baseline" and not cfg.all_aoi:
        log.info("scenario has non-AoI terminals; the Whittle oracle is skipped")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for seed in cfg.seeds:
        progress = None
        if not quiet and cfg.mode != "baseline":
            def progress(rec, seed=seed):
                if rec.iteration % 10 == 0 or rec.iteration == cfg.ce.iterations:
                    print(f"seed {seed} iteration {rec.iteration}: elite {rec.elite_mean_cost:.3f} "
                          f"eval {rec.eval_cost:.3f}", flush=True)
        res = run_seed(cfg, seed, progress=progress)
        write_seed_outputs(cfg, res, out)
        results.append(res)
    status = 1 if any(r.diverged for r in results) else 0
    if cfg.mode == "compare" or cfg.mode == "baseline":
        text = write_summary(cfg, [r for r in results if not r.diverged], out)
        if not quiet:
            print(text, end="")
    return status
