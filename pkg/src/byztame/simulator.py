"""Deterministic simulation substrate.

One simulator instance is one run: a register fabric, a signature authority,
per-process generators, and a seeded scheduler. Each step picks one process
and executes its next action (a register access, a signature request, or a
local transition). Correct processes are scheduled under a fairness window:
in any window of `fairness_window` consecutive steps every live correct
process takes at least one step. Picks are otherwise a seeded random walk.

Trace format, one line per step:

    step=<int> proc=<id> act=<read|write|local|sign> reg=<owner>/<label> \
        val=<hex-digest> status=<ok|byz>

Non-register actions use the acting process as owner and "-" as the label;
invocation/response recording rides on local steps.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import actions
from .adversary import AdversaryScript
from .codec import digest
from .events import History
from .registers import RegisterFabric, SimulationFault
from .signing import SignatureAuthority

DEFAULT_MAX_STEPS = 10 ** 6


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SystemConfig:
    n: int
    f: int
    seed: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    fairness_window: int | None = None  # defaults to 4n

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be positive, got {self.n}")
        if not 0 <= self.f <= self.n:
            raise ConfigError(f"f must be in [0, n], got {self.f}")
        if self.window < self.n:
            raise ConfigError(
                f"fairness_window {self.window} < n {self.n} is unsatisfiable")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")

    @property
    def window(self) -> int:
        return self.fairness_window if self.fairness_window is not None else 4 * self.n


class ProcessContext:
    """What protocol code may see: its identity, the system size, hooks."""

    __slots__ = ("pid", "n", "f", "_sim")

    def __init__(self, pid: int, sim: "Simulator"):
        self.pid = pid
        self.n = sim.config.n
        self.f = sim.config.f
        self._sim = sim

    def owned_labels(self) -> list[str]:
        return self._sim.fabric.labels_owned(self.pid)

    def hook(self, name: str, **info) -> None:
        for fn in self._sim.hooks.get(name, ()):
            fn(self._sim.steps, self.pid, **info)


class _Runtime:
    __slots__ = ("gen", "inbox", "finished")

    def __init__(self, gen):
        self.gen = gen
        self.inbox = None
        self.finished = gen is None


class Simulator:
    def __init__(self, config: SystemConfig, object_kind: str = "register",
                 trace: bool = True):
        self.config = config
        self.fabric = RegisterFabric(record_digests=trace)
        self.authority = SignatureAuthority()
        self.history = History(n=config.n, f=config.f, object_kind=object_kind)
        self.hooks: dict[str, list] = {}
        self.steps = 0
        self.trace: list[tuple] | None = [] if trace else None
        self._rng = random.Random(config.seed)
        self._ctx = {p: ProcessContext(p, self) for p in range(1, config.n + 1)}
        self._runtimes: dict[int, _Runtime] = {}
        self._corrupted: dict[int, int] = {}
        self._pending_corruptions: list[tuple[int, int, AdversaryScript]] = []
        # staggered virtual last-scheduled steps keep fairness deadlines distinct
        self._last = {p: p - config.n - 1 for p in range(1, config.n + 1)}
        self._window = config.window

    # -- setup ------------------------------------------------------------

    def context(self, pid: int) -> ProcessContext:
        return self._ctx[pid]

    def set_driver(self, pid: int, gen) -> None:
        self._runtimes[pid] = _Runtime(gen)

    def add_hook(self, name: str, fn) -> None:
        self.hooks.setdefault(name, []).append(fn)

    def corrupt(self, pid: int, at_step: int, script: AdversaryScript) -> None:
        """Schedule pid's corruption; from at_step its steps run the script."""
        if pid < 1 or pid > self.config.n:
            raise ConfigError(f"no such process {pid}")
        already = set(self._corrupted) | {p for p, _, _ in self._pending_corruptions}
        if pid not in already and len(already) >= self.config.f:
            raise ConfigError(
                f"corrupting process {pid} would exceed fault budget f={self.config.f}")
        self._pending_corruptions.append((pid, at_step, script))

    # -- scheduling -------------------------------------------------------

    def _apply_corruptions(self) -> None:
        now = self.steps
        still = []
        for pid, at_step, script in self._pending_corruptions:
            if at_step <= now:
                self._corrupted[pid] = at_step
                self.history.corrupted[pid] = at_step
                behavior = script.behavior(self._ctx[pid])
                self._runtimes[pid] = _Runtime(behavior)
            else:
                still.append((pid, at_step, script))
        self._pending_corruptions = still

    def _pick(self) -> int | None:
        corrupted = self._corrupted
        live = [p for p, rt in self._runtimes.items() if not rt.finished]
        if not live:
            return None
        now = self.steps
        window = self._window
        last = self._last
        due = None
        for p in live:
            if p not in corrupted and now >= last[p] + window:
                if due is None or last[p] < last[due]:
                    due = p
        if due is not None:
            return due
        live.sort()
        return self._rng.choice(live)

    # -- stepping ---------------------------------------------------------

    def step(self):
        """Execute one scheduler step; returns the trace record or None."""
        if self.steps >= self.config.max_steps:
            return None
        if self._pending_corruptions:
            self._apply_corruptions()
        pid = self._pick()
        if pid is None:
            return None
        runtime = self._runtimes[pid]
        step = self.steps
        self._last[pid] = step
        byz = pid in self._corrupted
        try:
            action = runtime.gen.send(runtime.inbox)
        except StopIteration:
            runtime.finished = True
            return self._emit(step, pid, "local", pid, "-", _HALT_DIGEST, byz)
        runtime.inbox = None
        kind = action[0]
        if kind == "read":
            _, owner, label = action
            value, dig = self.fabric.read_with_digest(owner, label)
            runtime.inbox = value
            record = self._emit(step, pid, "read", owner, label, dig, byz)
        elif kind == "write":
            _, label, value = action
            self.fabric.write(pid, label, value, caller=pid, step=step, byzantine=byz)
            dig = digest(value) if self.trace is not None else None
            record = self._emit(step, pid, "write", pid, label, dig, byz)
        elif kind == "sign":
            payload = action[1]
            runtime.inbox = self.authority.sign(pid, payload, requester=pid, step=step)
            dig = digest(payload) if self.trace is not None else None
            record = self._emit(step, pid, "sign", pid, "-", dig, byz)
        elif kind == "inv":
            _, op, args = action
            if byz:
                raise SimulationFault(f"corrupted process {pid} recorded an invocation")
            self.history.record("inv", pid, op, args, None, step)
            dig = digest(("inv", op, args)) if self.trace is not None else None
            record = self._emit(step, pid, "local", pid, "-", dig, byz)
        elif kind == "res":
            value = action[1]
            op, args = self._open_op(pid)
            self.history.record("res", pid, op, args, value, step)
            dig = digest(("res", value)) if self.trace is not None else None
            record = self._emit(step, pid, "local", pid, "-", dig, byz)
        elif kind == "local":
            dig = digest(action[1]) if self.trace is not None else None
            record = self._emit(step, pid, "local", pid, "-", dig, byz)
        else:
            raise SimulationFault(f"unknown action {action!r}")
        self.steps = step + 1
        return record

    def schedule_step(self):
        """Spec-level alias: one step, returning (process, trace record)."""
        record = self.step()
        return (record[1], record) if record else (None, None)

    def _open_op(self, pid: int):
        for e in reversed(self.history.events):
            if e.process == pid:
                if e.kind != "inv":
                    break
                return e.op, e.args
        raise SimulationFault(f"response without open invocation by {pid}")

    def _emit(self, step, pid, act, owner, label, dig, byz):
        record = (step, pid, act, owner, label, dig, byz)
        if self.trace is not None:
            self.trace.append(record)
        return record

    # -- running ----------------------------------------------------------

    def run(self, done=None) -> str:
        """Step until `done(sim)` or the budget runs out.

        Returns "completed" if the predicate fired, else "budget-exhausted".
        """
        max_steps = self.config.max_steps
        while self.steps < max_steps:
            if done is not None and done(self):
                return "completed"
            if self.step() is None:
                return "completed" if done is None else "budget-exhausted"
        return "budget-exhausted"

    def render_trace(self) -> str:
        if self.trace is None:
            raise SimulationFault("run was executed with tracing disabled")
        lines = [
            f"step={s} proc={p} act={a} reg={o}/{l} val={d} "
            f"status={'byz' if b else 'ok'}"
            for (s, p, a, o, l, d, b) in self.trace
        ]
        return "\n".join(lines) + ("\n" if lines else "")


_HALT_DIGEST = digest("halt")


def run_inline(gen, fabric: RegisterFabric, authority: SignatureAuthority, pid: int):
    """Drive a protocol generator to completion outside the scheduler.

    Unit-test helper: executes actions synchronously against the given
    fabric/authority and returns the generator's return value. Invocation
    and response markers are ignored.
    """
    result = None
    try:
        action = gen.send(None)
        while True:
            kind = action[0]
            if kind == "read":
                inbox = fabric.read(action[1], action[2])
            elif kind == "write":
                fabric.write(pid, action[1], action[2], caller=pid)
                inbox = None
            elif kind == "sign":
                inbox = authority.sign(pid, action[1], requester=pid)
            else:
                inbox = None
            action = gen.send(inbox)
    except StopIteration as stop:
        result = stop.value
    return result
