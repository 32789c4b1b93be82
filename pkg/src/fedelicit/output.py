"""Result files.

``trajectory.csv``
    scenario, seed, round, client, e, D, gamma, train_loss, test_loss, accuracy.
    One row per (seed, round, client) and variant; the loss columns describe
    the global model after the round and repeat across clients.
``settlement.csv``
    scenario, seed, client, reward, payoff, payoff_hat, server_payoff, bound.
    One row per (seed, client) and variant.
``summary.txt``
    ``key: value`` lines with the estimated constants and per-variant means.
``certificate.txt``
    Truthfulness and individual-rationality certificates (``verify`` only).

The scenario column reads ``<scenario>:<variant>``. Floats carry 17
significant digits, so parsing them back reproduces the values exactly.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .scenarios import ScenarioResult

TRAJECTORY_COLUMNS = ("scenario", "seed", "round", "client", "e", "D", "gamma", "train_loss", "test_loss", "accuracy")
SETTLEMENT_COLUMNS = ("scenario", "seed", "client", "reward", "payoff", "payoff_hat", "server_payoff", "bound")


def fmt(x) -> str:
    if isinstance(x, (int, str)):
        return str(x)
    return format(float(x), ".17g")


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def trajectory_rows(result: ScenarioResult):
    for r in result.runs:
        tag = f"{result.spec.scenario}:{r.variant}"
        for t, (tr, te, acc) in enumerate(zip(r.train_loss, r.test_loss, r.accuracy), 1):
            for i, s in enumerate(r.strategies):
                yield (tag, r.seed, t, i, s.e, s.D if isinstance(s.D, int) else float(s.D), float(s.gamma), tr, te, acc)


def settlement_rows(result: ScenarioResult):
    for r in result.runs:
        tag = f"{result.spec.scenario}:{r.variant}"
        for i, rec in enumerate(r.payoffs):
            yield (tag, r.seed, i, rec.reward, rec.payoff, rec.payoff_hat, r.server.payoff, r.bound)


def render(result: ScenarioResult) -> dict[str, str]:
    """File name to contents."""
    if not result.runs:
        raise ValueError("no results to emit")
    files = {
        "trajectory.csv": _csv(TRAJECTORY_COLUMNS, trajectory_rows(result)),
        "settlement.csv": _csv(SETTLEMENT_COLUMNS, settlement_rows(result)),
        "summary.txt": "\n".join(result.summary) + "\n",
    }
    if result.certificates:
        files["certificate.txt"] = "\n\n".join("\n".join(c.lines()) for c in result.certificates) + "\n"
    return files


def emit(result: ScenarioResult, out_dir) -> list[Path]:
    """Write every result file into ``out_dir``; nothing is written for empty results."""
    files = render(result)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written


def read_csv(path) -> list[dict]:
    """Parse an emitted CSV back; numeric fields become int or float."""
    def convert(v: str):
        try:
            return int(v)
        except ValueError:
            pass
        try:
            return float(v)
        except ValueError:
            return v

    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: convert(v) for k, v in row.items()} for row in csv.DictReader(fh)]
