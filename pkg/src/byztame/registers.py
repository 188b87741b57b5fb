"""The atomic SWMR register fabric.

Registers are keyed by (owner, label). Only the owner may write; anyone may
read. Each access is one whole value; atomicity comes from the single-
threaded simulation (one access per scheduler step). Never-written registers
read as None. Cells remember the digest of the stored value so traces do not
re-hash on every read.
"""

from __future__ import annotations

from .codec import digest


class SimulationFault(Exception):
    """A harness-level rule was broken (e.g. a non-owner write)."""


class RegisterFabric:
    def __init__(self, record_digests: bool = True):
        self._cells: dict[tuple[int, str], tuple[object, str | None]] = {}
        self._record_digests = record_digests
        self.write_hooks = []

    def write(self, owner: int, label: str, value, caller: int | None = None,
              step: int = -1, byzantine: bool = False) -> None:
        if caller is not None and caller != owner:
            raise SimulationFault(
                f"process {caller} attempted to write register {owner}/{label}")
        key = (owner, label)
        old = self._cells.get(key)
        dig = digest(value) if self._record_digests else None
        self._cells[key] = (value, dig)
        for hook in self.write_hooks:
            hook(step, owner, label, old[0] if old else None, value, byzantine)

    def read(self, owner: int, label: str):
        cell = self._cells.get((owner, label))
        return cell[0] if cell else None

    def read_with_digest(self, owner: int, label: str):
        cell = self._cells.get((owner, label))
        if cell is None:
            return None, _NONE_DIGEST
        value, dig = cell
        return value, (dig if dig is not None else digest(value))

    def labels_owned(self, owner: int) -> list[str]:
        return sorted(label for o, label in self._cells if o == owner)

    def items(self):
        """Deterministic (owner, label, value) listing for offline inspection."""
        for (owner, label) in sorted(self._cells):
            yield owner, label, self._cells[(owner, label)][0]


_NONE_DIGEST = digest(None)
