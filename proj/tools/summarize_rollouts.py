#!/usr/bin/env python3
"""Summarize a `dissipctl simulate` output directory.

Prints one line per rollout that entered the buffer (entry time, exit
reason, state at exit) and aggregate counts, including how many entering
rollouts handed off through the buffer floor. Useful when tuning a policy
whose success criterion is the handoff itself rather than a certificate.

Usage: tools/summarize_rollouts.py <simulate-out-dir>
"""

import argparse
import csv
import json
import os
import sys


def load_exit_state(out_dir, rollout, exit_index):
    path = os.path.join(out_dir, f"traj_{rollout:04d}.csv")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f, skipinitialspace=True))
    if not rows:
        return None
    row = rows[exit_index] if 0 <= exit_index < len(rows) else rows[-1]
    s = []
    k = 1
    while f"s{k}" in row:
        s.append(float(row[f"s{k}"]))
        k += 1
    return float(row["t"]), s


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", help="directory written by `dissipctl simulate`")
    args = ap.parse_args()

    with open(os.path.join(args.out_dir, "report.json")) as f:
        report = json.load(f)

    entered = clean = floor_exits = 0
    for i, rep in enumerate(report["reports"]):
        if not rep["entered"]:
            continue
        entered += 1
        clean += bool(rep["ok"])
        floor_exits += rep["exit_reason"] == "floor"
        state = load_exit_state(args.out_dir, i, rep["exit_index"])
        t_exit, s = state if state else (float("nan"), [])
        s_txt = ", ".join(f"s{k + 1}={v:.4g}" for k, v in enumerate(s))
        flag = "" if rep["ok"] else "  <- violations"
        print(
            f"rollout {i:4d}  entry t={rep['t_entry']:7.3f}  "
            f"exit t={t_exit:7.3f} via {rep['exit_reason']:<5}  [{s_txt}]"
            f"{flag}"
        )

    total = report["rollouts"]
    print(
        f"\n{total} rollouts: {entered} entered, {clean} clean among entered, "
        f"{floor_exits} exited via the floor, "
        f"{report['total_violations']} violation samples"
    )
    return 0 if clean == entered else 1


if __name__ == "__main__":
    sys.exit(main())
