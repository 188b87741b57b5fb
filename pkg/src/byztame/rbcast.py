"""Reliable broadcast over SWMR registers with resilience f < n/2.

Each process owns four registers per broadcast instance: a send slot holding
its latest signed (ts, value) pair, and append-only echo / ready / deliver
sets. Values are promoted through the stages by `refresh`: every reader
echoes whatever it reads from a send slot, attests "ready" only if no
conflicting value for the same (signer, ts) appears anywhere in the echo
registers, and assembles a delivery certificate once f+1 distinct processes
have self-attested ready and a second full echo scan (the double-collect)
still shows no conflict. A certificate travels freely: `deliver` copies the
first valid one it finds into the caller's own deliver register.

Message values are signed pairs tagged with their instance label, so a
certificate can never be replayed across instances.
"""

from __future__ import annotations

from functools import lru_cache

from .actions import local, read, sign, write
from .codec import SignedValue, encode
from .signing import verify


def send_label(instance: str, owner: int) -> str:
    return f"rbcast/{instance}/send_{owner}"


def echo_label(instance: str, owner: int) -> str:
    return f"rbcast/{instance}/echo_{owner}"


def ready_label(instance: str, owner: int) -> str:
    return f"rbcast/{instance}/ready_{owner}"


def deliver_label(instance: str, owner: int) -> str:
    return f"rbcast/{instance}/deliver_{owner}"


def message_payload(instance: str, ts: int, val) -> tuple:
    return ("m", instance, ts, val)


@lru_cache(maxsize=65536)
def message_fields(obj, instance: str):
    """(signer, ts, val) of a verifying signed pair for this instance, or None."""
    if type(obj) is not SignedValue:
        return None
    payload = obj.payload
    if (type(payload) is not tuple or len(payload) != 4 or payload[0] != "m"
            or payload[1] != instance or type(payload[2]) is not int
            or payload[2] < 0):
        return None
    if not verify(obj):
        return None
    return obj.signer, payload[2], payload[3]


def _iter_entries(content):
    """Deterministic iteration over a register's set content; tolerates garbage."""
    if type(content) is frozenset:
        return sorted(content, key=encode)
    if content is None:
        return ()
    return (content,)  # a bare value written by a Byzantine owner


@lru_cache(maxsize=65536)
def _echo_conflict(content, instance: str, signer: int, ts: int, val) -> bool:
    for entry in _iter_entries(content):
        m = entry
        if (type(entry) is SignedValue and type(entry.payload) is tuple
                and len(entry.payload) == 2 and entry.payload[0] == "echo"):
            if not verify(entry):
                continue
            m = entry.payload[1]
        fields = message_fields(m, instance)
        if fields and fields[0] == signer and fields[1] == ts and fields[2] != val:
            return True
    return False


@lru_cache(maxsize=65536)
def certificate_fields(obj, instance: str, f: int):
    """Validated ((signer, ts, val), message, attestations) or None.

    A certificate is valid when its attestations verify, all attest exactly
    the embedded message, and they carry at least f+1 distinct signers.
    """
    if type(obj) is not tuple or len(obj) != 3 or obj[0] != "cert":
        return None
    message, atts = obj[1], obj[2]
    fields = message_fields(message, instance)
    if fields is None or type(atts) is not frozenset:
        return None
    signers = set()
    for att in atts:
        if (type(att) is SignedValue and type(att.payload) is tuple
                and len(att.payload) == 2 and att.payload[0] == "ready"
                and att.payload[1] == message and verify(att)):
            signers.add(att.signer)
    if len(signers) < f + 1:
        return None
    return fields, message, atts


class RbcastEndpoint:
    """Per-process view of one broadcast instance.

    Keeps local mirrors of the process's own registers (it is their only
    writer) and drives all cross-process effects through yielded actions.
    """

    def __init__(self, ctx, instance: str):
        self.ctx = ctx
        self.instance = instance
        self._echo: set = set()
        self._ready: set = set()
        self._ready_keys: set = set()
        self._deliver: set = set()
        self._delivered: dict[tuple[int, int], tuple] = {}  # (signer, ts) -> (val, cert)

    # -- operations --------------------------------------------------------

    def g_set_send(self, ts: int, val):
        """Publish a signed (ts, val) pair in the own send slot (2 steps)."""
        sv = yield sign(message_payload(self.instance, ts, val))
        yield write(send_label(self.instance, self.ctx.pid), sv)

    def g_broadcast(self, ts: int, val):
        """Object-level broadcast: completes once the value is deliverable."""
        yield from self.g_set_send(ts, val)
        while True:
            value, _ = yield from self.g_deliver(self.ctx.pid, ts)
            if value is not None:
                return True

    def g_deliver(self, j: int, ts: int):
        """One deliver attempt; returns (value, certificate) or (None, None)."""
        yield from self.g_refresh()
        key = (j, ts)
        cached = self._delivered.get(key)
        if cached is not None:
            return cached
        instance, f = self.instance, self.ctx.f
        for k in range(1, self.ctx.n + 1):
            content = yield read(k, deliver_label(instance, k))
            for entry in _iter_entries(content):
                fields = certificate_fields(entry, instance, f)
                if fields and fields[0][0] == j and fields[0][1] == ts:
                    value = fields[0][2]
                    yield from self._adopt_certificate(key, value, entry)
                    return value, entry
        return None, None

    def g_refresh(self):
        """Read every send slot and promote values through echo/ready/deliver."""
        instance = self.instance
        n, f, pid = self.ctx.n, self.ctx.f, self.ctx.pid
        for j in range(1, n + 1):
            m = yield read(j, send_label(instance, j))
            fields = message_fields(m, instance)
            if fields is None or fields[0] != j:
                continue  # not a signed pair by the register's owner
            signer, ts, val = fields
            if (signer, ts) in self._delivered:
                continue  # certificate already held; promotion is complete
            if m not in self._echo:
                wrapper = yield sign(("echo", m))
                self._echo.add(wrapper)
                yield write(echo_label(instance, pid), frozenset(self._echo))
            conflicted = yield from self.g_conflicting_echo(signer, ts, val)
            if not conflicted and (signer, ts) not in self._ready_keys:
                att = yield sign(("ready", m))
                self._ready.add(att)
                self._ready_keys.add((signer, ts))
                yield write(ready_label(instance, pid), frozenset(self._ready))
            attestations = yield from self._g_collect_ready(m)
            if len(attestations) >= f + 1:
                conflicted = yield from self.g_conflicting_echo(signer, ts, val)
                if not conflicted:
                    sigma = frozenset(sorted(attestations.values(),
                                             key=lambda a: a.signer)[:f + 1])
                    cert = ("cert", m, sigma)
                    yield from self._adopt_certificate((signer, ts), val, cert)

    def g_conflicting_echo(self, signer: int, ts: int, val):
        """True iff some echo register holds a verifying (ts, w != val) pair
        by `signer`. Reads all n echo registers in ascending owner order."""
        instance = self.instance
        found = False
        for k in range(1, self.ctx.n + 1):
            content = yield read(k, echo_label(instance, k))
            if not found and _echo_conflict(content, instance, signer, ts, val):
                found = True
        return found

    # -- internals ----------------------------------------------------------

    def _g_collect_ready(self, m):
        """Self-signed ready attestations on m, per owner register."""
        instance = self.instance
        out = {}
        for k in range(1, self.ctx.n + 1):
            content = yield read(k, ready_label(instance, k))
            for entry in _iter_entries(content):
                if (type(entry) is SignedValue and entry.signer == k
                        and type(entry.payload) is tuple and len(entry.payload) == 2
                        and entry.payload[0] == "ready" and entry.payload[1] == m
                        and verify(entry)):
                    out[k] = entry
                    break
        return out

    def _adopt_certificate(self, key, value, cert):
        if key in self._delivered:
            return
        self._delivered[key] = (value, cert)
        self._deliver.add(cert)
        yield write(deliver_label(self.instance, self.ctx.pid),
                    frozenset(self._deliver))

    def delivered_value(self, j: int, ts: int):
        got = self._delivered.get((j, ts))
        return got[0] if got else None
