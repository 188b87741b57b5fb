"""Adversary scripts: corruption strategies for the adaptive adversary.

A corrupted process stops running its protocol driver and instead executes
its script's behavior generator, one action per scheduled step. Behaviors
may write only the target's own registers (the simulator enforces single-
writer by construction) and may request signatures only as the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import actions

STRATEGIES = ("none", "crash-silent", "equivocate", "register-reset", "custom")


class AdversaryConfigError(Exception):
    pass


@dataclass(frozen=True)
class AdversaryScript:
    strategy: str
    targets: frozenset[int]
    at_step: int = 0
    parameters: dict = field(default_factory=dict, hash=False, compare=False)
    behavior_factory: Callable | None = None  # custom only

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise AdversaryConfigError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "custom" and self.behavior_factory is None:
            raise AdversaryConfigError("custom strategy needs a behavior_factory")

    def behavior(self, ctx):
        """Behavior generator for one corrupted target, or None to stay silent."""
        if self.strategy in ("none", "crash-silent"):
            return None
        if self.strategy == "register-reset":
            return _register_reset(ctx)
        if self.strategy == "equivocate":
            return _equivocate(ctx, self.parameters)
        return self.behavior_factory(ctx)


def _register_reset(ctx):
    # restores every register the target has written to its initial state
    for label in ctx.owned_labels():
        yield actions.write(label, None)


def _equivocate(ctx, params):
    """Alternate conflicting signed values in the target's own registers.

    Modes: "rbcast" rewrites the send register of a broadcast instance with
    the same timestamp and cycling values; "snapshot" rewrites the target's
    own collect slot, bumping the timestamp each full value cycle; "asset"
    grows a transfer segment whose records reuse sequence numbers with
    alternating destinations.
    """
    mode = params.get("mode", "rbcast")
    values = tuple(params.get("values", ("a", "b")))
    period = int(params.get("period", 1))
    idx = 0
    if mode == "rbcast":
        instance = params.get("instance", "main")
        ts = int(params.get("ts", 1))
        label = f"rbcast/{instance}/send_{ctx.pid}"
        while True:
            payload = ("m", instance, ts, values[idx % len(values)])
            sv = yield actions.sign(payload)
            yield actions.write(label, sv)
            idx += 1
            for _ in range(period - 1):
                yield actions.local("byz-wait")
    elif mode == "snapshot":
        ts = int(params.get("ts", 1))
        label = f"snap/collected_{ctx.pid}"
        while True:
            sv = yield actions.sign(("coll", ts, values[idx % len(values)]))
            yield actions.write(label, sv)
            idx += 1
            if idx % len(values) == 0:
                ts += 1
            for _ in range(period - 1):
                yield actions.local("byz-wait")
    elif mode == "asset":
        dsts = tuple(int(d) for d in params.get("dsts", (1, 2)))
        amount = int(params.get("amount", 1))
        label = f"snap/collected_{ctx.pid}"
        records: list = []
        ts = 0
        while True:
            seq = idx // len(dsts) + 1
            dst = dsts[idx % len(dsts)]
            rec = yield actions.sign(("xfer", seq, ctx.pid, dst, amount))
            records.append(rec)
            ts += 1
            sv = yield actions.sign(("coll", ts, ("seg", tuple(records))))
            yield actions.write(label, sv)
            idx += 1
            for _ in range(period - 1):
                yield actions.local("byz-wait")
    else:
        raise AdversaryConfigError(f"unknown equivocate mode {mode!r}")
