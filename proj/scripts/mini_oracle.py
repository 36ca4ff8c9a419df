#!/usr/bin/env python3
"""Reference computation of the mini-corpus report.

Runs every bundled candidate with a plain subprocess call and recomputes
consensus selection, metrics, and bootstrap errors from scratch, without
touching the C++ implementation. Output is frozen into
data/mini/expected_report.json, which the acceptance suite compares
against the report produced by the `fmv` pipeline.

Usage: python3 scripts/mini_oracle.py [--write]
"""
import argparse
import json
import math
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TASKS = os.path.join(ROOT, "data", "mini", "tasks.jsonl")
CANDS = os.path.join(ROOT, "data", "mini", "candidates.jsonl")
EXPECTED = os.path.join(ROOT, "data", "mini", "expected_report.json")

MAX_OUTPUT = 1 << 20
BOOTSTRAP_B = 1000
BOOTSTRAP_SEED = 42


class Mt19937_64:
    """mt19937_64 with the same seeding sequence as the C++ engine."""

    N, M = 312, 156
    MATRIX_A = 0xB5026F5AA96619E9
    UPPER = 0xFFFFFFFF80000000
    LOWER = 0x7FFFFFFF
    MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.mt = [0] * self.N
        self.mt[0] = seed & self.MASK
        for i in range(1, self.N):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & self.MASK
        self.index = self.N

    def next(self):
        if self.index >= self.N:
            for i in range(self.N):
                x = (self.mt[i] & self.UPPER) | (self.mt[(i + 1) % self.N] & self.LOWER)
                xa = x >> 1
                if x & 1:
                    xa ^= self.MATRIX_A
                self.mt[i] = self.mt[(i + self.M) % self.N] ^ xa
            self.index = 0
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y &= self.MASK
        y ^= (y << 37) & 0xFFF7EEE000000000
        y &= self.MASK
        y ^= y >> 43
        return y

    def below(self, n):
        m = (1 << 64) - 1
        limit = m - (m % n)
        while True:
            x = self.next()
            if x < limit:
                return x % n


def normalize(raw):
    """Canonical output form; None means invalid format."""
    try:
        text = raw.decode("utf-8", errors="strict")
    except UnicodeDecodeError:
        return None
    text = text.replace("\r\n", "\n")
    lines = [ln.strip(" \t\r\v\f") for ln in text.split("\n")]
    while lines and lines[0] == "":
        lines.pop(0)
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return None
    return "\n".join(lines)


def run_one(source, test_input):
    with tempfile.NamedTemporaryFile("w", suffix=".py", delete=False) as f:
        f.write(source)
        path = f.name
    try:
        proc = subprocess.run(
            [sys.executable, path],
            input=test_input.encode(),
            capture_output=True,
            timeout=20,
        )
    finally:
        os.unlink(path)
    if proc.returncode != 0:
        return None
    if len(proc.stdout) > MAX_OUTPUT:
        return None
    return normalize(proc.stdout)


def load_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def bootstrap_se(values, b_resamples, seed):
    rng = Mt19937_64(seed)
    t = len(values)
    mhat = sum(values) / t
    acc = 0.0
    for _ in range(b_resamples):
        s = 0.0
        for _ in range(t):
            s += values[rng.below(t)]
        m = s / t
        acc += (m - mhat) * (m - mhat)
    return math.sqrt(acc / b_resamples)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--write", action="store_true", help="write expected_report.json")
    args = ap.parse_args()

    tasks = load_jsonl(TASKS)
    cands = load_jsonl(CANDS)
    by_task = {}
    for c in cands:
        by_task.setdefault(c["task_id"], []).append(c)
    for rows in by_task.values():
        rows.sort(key=lambda c: c["sample_index"])

    per_task = []
    mean_vals, best_vals, fmv_vals = [], [], []
    n_no_consensus = 0

    with ThreadPoolExecutor(max_workers=16) as pool:
        for task in sorted(tasks, key=lambda t: t["task_id"]):
            rows = by_task[task["task_id"]]
            k = len(task["test_inputs"])
            futures = [
                [pool.submit(run_one, c["source"], x) for x in task["test_inputs"]]
                for c in rows
            ]
            outputs = [[f.result() for f in row] for row in futures]
            valid = [all(o is not None for o in row) for row in outputs]

            oracle = [normalize(o.encode()) for o in task["oracle_outputs"]]
            correct = [
                valid[i] and all(outputs[i][j] == oracle[j] for j in range(k))
                for i in range(len(rows))
            ]

            # FMV score: pairwise slot agreement within the valid set
            scores = {}
            for i in range(len(rows)):
                if not valid[i]:
                    continue
                s = 0
                for j in range(len(rows)):
                    if j == i or not valid[j]:
                        continue
                    for slot in range(k):
                        if outputs[i][slot] == outputs[j][slot]:
                            s += 1
                scores[i] = s

            selected = None
            if scores:
                best_score = max(scores.values())
                selected = min(i for i, s in scores.items() if s == best_score)

            no_consensus = selected is None
            fmv_correct = selected is not None and correct[selected]
            if no_consensus:
                n_no_consensus += 1

            n_correct = sum(correct)
            per_task.append({
                "task_id": task["task_id"],
                "n_candidates": len(rows),
                "n_correct": n_correct,
                "fmv_correct": fmv_correct,
                "no_consensus": no_consensus,
                "selected_index": selected,
            })
            mean_vals.append(n_correct / len(rows))
            best_vals.append(1.0 if n_correct > 0 else 0.0)
            fmv_vals.append(1.0 if fmv_correct else 0.0)

    t = len(per_task)
    report = {
        "n_tasks_total": t,
        "n_tasks_evaluated": t,
        "n_excluded_missing_oracle": 0,
        "n_no_consensus": n_no_consensus,
        "mean_at_n": sum(mean_vals) / t,
        "best_at_n": sum(best_vals) / t,
        "fmv_accuracy": sum(fmv_vals) / t,
        "bootstrap": {
            "resamples": BOOTSTRAP_B,
            "seed": BOOTSTRAP_SEED,
            "mean_at_n_se": bootstrap_se(mean_vals, BOOTSTRAP_B, BOOTSTRAP_SEED),
            "best_at_n_se": bootstrap_se(best_vals, BOOTSTRAP_B, BOOTSTRAP_SEED),
            "fmv_accuracy_se": bootstrap_se(fmv_vals, BOOTSTRAP_B, BOOTSTRAP_SEED),
        },
        "per_task": per_task,
    }

    text = json.dumps(report, indent=2)
    print(text)
    if args.write:
        with open(EXPECTED, "w") as f:
            f.write(text + "\n")
        print(f"\nwrote {EXPECTED}", file=sys.stderr)


if __name__ == "__main__":
    main()
