"""Object-level histories: invocation/response events and their file form.

The history file format (one event per line, header first):

    # byztame-history v1
    kind=<register|rbcast|snapshot|asset-transfer> n=<int> f=<int> byzantine=<id,id,...> init=<hex>
    e=inv p=<id> op=<name> args=<hex> step=<int>
    e=res p=<id> op=<name> args=<hex> val=<hex> step=<int>
    c= p=<id> op=<name> args=<hex> val=<hex>

`args` and `val` are canonical encodings in hex. `c=` lines are optional
candidate hints (hypothetical Byzantine operations a checker may use).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .codec import from_hex, to_hex

KINDS = ("register", "rbcast", "snapshot", "asset-transfer")


class HistoryError(ValueError):
    pass


@dataclass(frozen=True)
class Event:
    kind: str  # "inv" | "res"
    process: int
    op: str
    args: tuple
    value: object  # response payload; None for invocations
    step: int


@dataclass
class History:
    """Recorded invocation/response events plus the corruption record."""

    n: int
    f: int
    object_kind: str
    events: list[Event] = field(default_factory=list)
    corrupted: dict[int, int] = field(default_factory=dict)  # pid -> corruption step
    init: object = None  # object-kind parameters (e.g. initial balances)
    candidates: list[tuple] = field(default_factory=list)  # (proc, op, args, value)

    def record(self, kind: str, process: int, op: str, args: tuple, value,
               step: int) -> None:
        self.events.append(Event(kind, process, op, args, value, step))

    @property
    def byzantine(self) -> frozenset[int]:
        return frozenset(self.corrupted)

    def correct_projection(self) -> list[Event]:
        """Events of processes never corrupted in the run."""
        byz = self.byzantine
        return [e for e in self.events if e.process not in byz]

    def validate(self) -> None:
        """Well-formedness: per-process alternation, strictly increasing steps."""
        if len(self.corrupted) > self.f:
            raise HistoryError(
                f"{len(self.corrupted)} corrupted processes exceed fault budget {self.f}")
        last_step = -1
        open_op: dict[int, Event] = {}
        for e in self.events:
            if e.step <= last_step:
                raise HistoryError(f"event steps not strictly increasing at {e}")
            last_step = e.step
            if e.kind == "inv":
                if e.process in open_op:
                    raise HistoryError(f"process {e.process} invoked while pending")
                open_op[e.process] = e
            elif e.kind == "res":
                pending = open_op.pop(e.process, None)
                if pending is None or pending.op != e.op:
                    raise HistoryError(f"unmatched response {e}")
            else:
                raise HistoryError(f"bad event kind {e.kind!r}")


def render_history(history: History) -> str:
    lines = ["# byztame-history v1"]
    byz = ",".join(str(p) for p in sorted(history.byzantine))
    lines.append(
        f"kind={history.object_kind} n={history.n} f={history.f} "
        f"byzantine={byz} init={to_hex(history.init)}")
    byzset = history.byzantine
    for e in history.events:
        if e.process in byzset:
            continue
        if e.kind == "inv":
            lines.append(
                f"e=inv p={e.process} op={e.op} args={to_hex(e.args)} step={e.step}")
        else:
            lines.append(
                f"e=res p={e.process} op={e.op} args={to_hex(e.args)} "
                f"val={to_hex(e.value)} step={e.step}")
    for proc, op, args, value in history.candidates:
        lines.append(
            f"c= p={proc} op={op} args={to_hex(args)} val={to_hex(value)}")
    return "\n".join(lines) + "\n"


def _fields(line: str) -> dict[str, str]:
    out = {}
    for token in line.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise HistoryError(f"malformed token {token!r}")
        out[key] = value
    return out

def parse_history(text: str) -> History:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise HistoryError("missing history header comment")
    header = _fields(lines[1])
    kind = header.get("kind")
    if kind not in KINDS:
        raise HistoryError(f"unknown object kind {kind!r}")
    n = int(header["n"])
    f = int(header["f"])
    byz = [int(p) for p in header.get("byzantine", "").split(",") if p]
    history = History(n=n, f=f, object_kind=kind,
                      corrupted={p: 0 for p in byz},
                      init=from_hex(header.get("init", "4e")))
    for ln in lines[2:]:
        fields = _fields(ln)
        if "e" in fields:
            kind_ = fields["e"]
            args = from_hex(fields["args"])
            value = from_hex(fields["val"]) if kind_ == "res" else None
            history.record(kind_, int(fields["p"]), fields["op"], args, value,
                           int(fields["step"]))
        elif "c" in fields:
            history.candidates.append(
                (int(fields["p"]), fields["op"], from_hex(fields["args"]),
                 from_hex(fields["val"])))
        else:
            raise HistoryError(f"unrecognized history line {ln!r}")
    return history
