"""Line-delimited training log shared by both trainers.

One JSON record per optimization step. Keys in use:

    step       global step index (strictly increasing across a log)
    epoch      1-based epoch the step belongs to
    phase      "critic" | "generator" | "n2n"
    critic_loss, wgan, cycle, tv, total, mse   loss values (phase-dependent)
    lr_gen, lr_critic, lr                      learning rates in effect
    max_abs_critic_param                       post-clip parameter bound check
    clamp_fraction                             share of negative generator pixels
    wall_time                                  seconds since the run started

Every numeric field must be finite; step indices must increase.
"""
from __future__ import annotations

import json
import math


class TrainLog:
    def __init__(self, records: list[dict] | None = None):
        self.records: list[dict] = []
        for rec in records or []:
            self.append(**rec)

    def append(self, **record) -> None:
        step = record.get("step")
        if not isinstance(step, int):
            raise ValueError("log record needs an integer 'step'")
        if self.records and step <= self.records[-1]["step"]:
            raise ValueError(
                f"step indices must increase: {step} after {self.records[-1]['step']}"
            )
        for key, value in record.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"non-finite value for {key!r} at step {step}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def last_step(self) -> int:
        return self.records[-1]["step"] if self.records else 0

    @property
    def last_epoch(self) -> int:
        return self.records[-1].get("epoch", 0) if self.records else 0

    def phase(self, name: str) -> list[dict]:
        return [r for r in self.records if r.get("phase") == name]

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "TrainLog":
        log = cls()
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if line:
                    log.append(**json.loads(line))
        return log
