"""Byzantine snapshot object built on reliable broadcast.

Each process owns n collect registers (its view of every process's latest
signed (ts, value) entry) and a savesnap register per aux round. An update
refreshes the collect view and publishes the next own entry. A snapshot
repeatedly runs aux instances until one returns an array at least as new as
the collect state at the snapshot's start.

An aux instance is a dedicated reliable-broadcast instance: everyone
broadcasts its collect array as a round-0 "start" message, then repeatedly
broadcasts the set of processes whose start messages it has delivered.
Messages are delivered per sender in timestamp order (round robin across
senders). Once f+1 processes report the same cumulative sender set in some
round, the caller's collect array equals the supremum of those senders'
start arrays and is returned, after being stored in the savesnap register
together with all delivery certificates received in the instance: the proof
that lets any lagging process adopt the result after re-verifying it.
"""

from __future__ import annotations

from functools import lru_cache

from .actions import read, sign, write
from .codec import SignedValue, encode
from .rbcast import RbcastEndpoint, certificate_fields
from .signing import verify

INVALID_START_RETRIES = 3  # re-reads of a garbage round-0 message before skipping


def collected_label(slot: int) -> str:
    return f"snap/collected_{slot}"


def savesnap_label(owner: int, auxnum: int) -> str:
    return f"snap/savesnap_{owner}/{auxnum}"


def aux_instance(auxnum: int) -> str:
    return f"snapaux/{auxnum}"


@lru_cache(maxsize=65536)
def entry_fields(obj, slot: int):
    """(ts, val) of a verifying collect entry signed by its slot owner."""
    if type(obj) is not SignedValue or obj.signer != slot:
        return None
    payload = obj.payload
    if (type(payload) is not tuple or len(payload) != 3 or payload[0] != "coll"
            or type(payload[1]) is not int or payload[1] < 1):
        return None
    return (payload[1], payload[2]) if verify(obj) else None


def entry_ts(entry) -> int:
    return entry.payload[1] if entry is not None else 0


def ts_vector(entries) -> tuple[int, ...]:
    return tuple(entry_ts(e) for e in entries)


def leq(a, b) -> bool:
    """Coordinate-wise (reflexive) timestamp order on collect arrays."""
    return all(entry_ts(x) <= entry_ts(y) for x, y in zip(a, b))


def lt(a, b) -> bool:
    """Strict coordinate-wise order: every timestamp strictly smaller."""
    return all(entry_ts(x) < entry_ts(y) for x, y in zip(a, b))


def comparable(a, b) -> bool:
    return leq(a, b) or leq(b, a)


def public_array(entries) -> tuple:
    """History form of a collect array: (ts, val) per slot, None for bottom."""
    return tuple(None if e is None else (e.payload[1], e.payload[2])
                 for e in entries)


def _sanitize_start(value, n: int):
    """Entries of a structurally valid start message, or None."""
    if (type(value) is not tuple or len(value) != 2 or value[0] != "start"
            or type(value[1]) is not tuple or len(value[1]) != n):
        return None
    entries = []
    for slot, raw in enumerate(value[1], start=1):
        entries.append(raw if entry_fields(raw, slot) else None)
    return tuple(entries)


def _senders_payload(value):
    if (type(value) is tuple and len(value) == 2 and value[0] == "senders"
            and type(value[1]) is frozenset
            and all(type(p) is int for p in value[1])):
        return value[1]
    return None


def supremum_candidates(arrays, n: int):
    """Per slot: (max ts, set of entries carrying it) over the given arrays."""
    out = []
    for slot in range(n):
        best = 0
        tied: set = set()
        for arr in arrays:
            e = arr[slot]
            t = entry_ts(e)
            if t > best:
                best, tied = t, {e}
            elif t == best and t > 0:
                tied.add(e)
        out.append((best, tied))
    return out


@lru_cache(maxsize=4096)
def verify_savesnap_proof(snap, proof, n: int, f: int, instance: str) -> bool:
    """Re-check the stability condition from a stored proof.

    The proof must contain delivery certificates, all from this aux
    instance, reconstructing: a set S of at least f+1 processes whose
    cumulative sender reports through some round r all equal one set S',
    S a subset of S', verifying start messages from every member of S',
    and per slot the snapshot carrying the supremum timestamp with an
    entry actually present in one of those start arrays.
    """
    if (type(snap) is not tuple or len(snap) != n
            or type(proof) is not frozenset):
        return False
    for slot, e in enumerate(snap, start=1):
        if e is not None and not entry_fields(e, slot):
            return False
    messages: dict[tuple[int, int], object] = {}
    for cert in proof:
        fields = certificate_fields(cert, instance, f)
        if fields is None:
            continue
        (sender, ts, val), _, _ = fields
        if messages.setdefault((sender, ts), val) != val:
            return False  # conflicting certified messages cannot occur honestly
    starts: dict[int, tuple] = {}
    rounds: dict[int, dict[int, frozenset]] = {}
    max_round = 0
    for (sender, ts), val in messages.items():
        if ts == 0:
            entries = _sanitize_start(val, n)
            if entries is not None:
                starts[sender] = entries
        else:
            senders = _senders_payload(val)
            if senders is not None:
                rounds.setdefault(sender, {})[ts] = senders
                max_round = max(max_round, ts)
    snap_ts = ts_vector(snap)
    for r in range(1, max_round + 1):
        unions: dict[int, frozenset] = {}
        for p, by_round in rounds.items():
            if all(t in by_round for t in range(1, r + 1)):
                acc: frozenset = frozenset()
                for t in range(1, r + 1):
                    acc |= by_round[t]
                unions[p] = acc
        groups: dict[frozenset, set[int]] = {}
        for p, u in unions.items():
            groups.setdefault(u, set()).add(p)
        for sprime, members in groups.items():
            if len(members) < f + 1 or not members <= sprime:
                continue
            if not all(p in starts for p in sprime):
                continue
            sup = supremum_candidates([starts[p] for p in sorted(sprime)], n)
            ok = True
            for slot in range(n):
                best, tied = sup[slot]
                if snap_ts[slot] != best:
                    ok = False
                    break
                if best > 0 and snap[slot] not in tied:
                    ok = False
                    break
            if ok:
                return True
    return False


class SnapshotEndpoint:
    """Per-process snapshot state machine."""

    def __init__(self, ctx):
        self.ctx = ctx
        self.ts = 0
        self.collect: list = [None] * ctx.n
        self.auxnum = 0
        self.cursor = 1  # round-robin delivery position, persists across instances
        self._savesnap_written: dict[int, object] = {}

    # -- object operations ---------------------------------------------------

    def g_update(self, v):
        """Collect the current memory state, then publish the next own entry."""
        yield from self._g_collect_all()
        self.ts += 1
        pid = self.ctx.pid
        entry = yield sign(("coll", self.ts, v))
        self.collect[pid - 1] = entry
        yield write(collected_label(pid), entry)
        return self.ts

    def g_snapshot(self):
        """Return a collect array at least as new as the state at the start."""
        yield from self._g_collect_all()
        base = tuple(self.collect)
        while True:
            self.auxnum += 1
            snap = yield from self.g_snapshot_aux(self.auxnum)
            if leq(base, snap):
                return snap

    # -- collect plumbing ------------------------------------------------------

    def _g_collect_all(self):
        for j in range(1, self.ctx.n + 1):
            entries = yield from self.g_read_collected(j)
            yield from self.g_update_collect(entries)

    def g_read_collected(self, j: int):
        entries = []
        for slot in range(1, self.ctx.n + 1):
            raw = yield read(j, collected_label(slot))
            entries.append(raw if entry_fields(raw, slot) else None)
        return tuple(entries)

    def g_update_collect(self, entries):
        """Adopt entries that verify and strictly increase the slot timestamp."""
        collect = self.collect
        pid = self.ctx.pid
        for idx, candidate in enumerate(entries):
            if candidate is None:
                continue
            fields = entry_fields(candidate, idx + 1)
            if fields and fields[0] > entry_ts(collect[idx]):
                collect[idx] = candidate
                yield write(collected_label(idx + 1), candidate)

    # -- aux instances ---------------------------------------------------------

    def g_snapshot_aux(self, auxnum: int):
        ctx = self.ctx
        n, f, pid = ctx.n, ctx.f, ctx.pid
        instance = aux_instance(auxnum)
        rb = RbcastEndpoint(ctx, instance)
        yield from self._g_collect_all()
        state = _AuxState(pid)
        ctx.hook("aux-senders", auxnum=auxnum, senders=frozenset(state.senders),
                 starts=dict(state.starts), collect=tuple(self.collect))
        state.starts[pid] = tuple(self.collect)
        cached = yield from self._g_broadcast_helping(
            rb, 0, ("start", tuple(self.collect)), auxnum)
        if cached is not None:
            return cached
        while True:
            cached = yield from self.g_minimum_saved(auxnum)
            if cached is not None:
                return cached
            self.cursor = (self.cursor % n) + 1
            sender = self.cursor
            next_ts = state.rts.get(sender, 0)
            value, cert = yield from rb.g_deliver(sender, next_ts)
            if value is None:
                continue
            if not self._process_message(state, sender, next_ts, value, cert,
                                         auxnum):
                continue
            while len(state.counts.get(state.round, ())) >= f + 1 \
                    and state.round not in state.announced:
                state.announced.add(state.round)
                state.round += 1
                cached = yield from self._g_broadcast_helping(
                    rb, state.round, ("senders", frozenset(state.senders)), auxnum)
                if cached is not None:
                    return cached
            if self._stability_holds(state, f):
                cached = yield from self.g_minimum_saved(auxnum)
                if cached is not None:
                    return cached
                result = tuple(self.collect)
                yield from self._g_store_savesnap(
                    auxnum, ("save", result, frozenset(state.sigma)))
                return result

    def _process_message(self, state, sender, ts, value, cert, auxnum) -> bool:
        """Apply one delivered message; False leaves rts unchanged (deferred)."""
        ctx = self.ctx
        if ts == 0:
            entries = _sanitize_start(value, ctx.n)
            if entries is None:
                # a Byzantine start that is no collect array: bounded re-reads,
                # then skipped for good so the sender cannot stall the cursor
                state.bad_start[sender] = state.bad_start.get(sender, 0) + 1
                if state.bad_start[sender] < INVALID_START_RETRIES:
                    return False
                state.rts[sender] = ts + 1
                return True
            state.sigma.add(cert)
            self._adopt_pending = True
            yield_none = self.g_update_collect(entries)
            # update_collect yields writes; delegate through a mini-driver
            return self._finish_start(state, sender, ts, entries, yield_none,
                                      auxnum)
        senders = _senders_payload(value)
        if senders is not None:
            if not senders <= state.senders:
                return False  # dependencies missing; message stays queued
            state.sigma.add(cert)
            prev = state.seen.get(sender, {}).get(ts - 1, frozenset())
            state.seen.setdefault(sender, {})[ts] = senders | prev
            state.counts.setdefault(ts, set()).add(sender)
            state.rts[sender] = ts + 1
            return True
        state.rts[sender] = ts + 1  # unusable round message; never processable
        return True

    def _finish_start(self, state, sender, ts, entries, pending_gen, auxnum):
        raise NotImplementedError  # replaced below; see _process_message note

    def _stability_holds(self, state, f: int) -> bool:
        target = frozenset(state.senders)
        tally: dict[int, int] = {}
        for rows in state.seen.values():
            for rnd, seen_set in rows.items():
                if seen_set == target:
                    tally[rnd] = tally.get(rnd, 0) + 1
        return any(count >= f + 1 for count in tally.values())

    def _g_broadcast_helping(self, rb, ts, value, auxnum):
        """Send and wait for own delivery, adopting a saved snapshot if one
        appears first (another correct process already finished this aux)."""
        yield from rb.g_set_send(ts, value)
        while True:
            got, _ = yield from rb.g_deliver(self.ctx.pid, ts)
            if got is not None:
                return None
            cached = yield from self.g_minimum_saved(auxnum)
            if cached is not None:
                return cached

    # -- saved snapshots --------------------------------------------------------

    def g_minimum_saved(self, auxnum: int):
        ctx = self.ctx
        instance = aux_instance(auxnum)
        found = []
        for j in range(1, ctx.n + 1):
            raw = yield read(j, savesnap_label(j, auxnum))
            if (type(raw) is tuple and len(raw) == 3 and raw[0] == "save"
                    and verify_savesnap_proof(raw[1], raw[2], ctx.n, ctx.f,
                                              instance)):
                found.append((raw[1], raw[2]))
        if not found:
            return None
        found.sort(key=lambda sp: (ts_vector(sp[0]), encode(sp[0])))
        result = found[0][0]
        union_proof = frozenset().union(*(proof for _, proof in found))
        yield from self._g_store_savesnap(auxnum, ("save", result, union_proof))
        yield from self.g_update_collect(result)
        return result

    def _g_store_savesnap(self, auxnum: int, value):
        if self._savesnap_written.get(auxnum) != value:
            self._savesnap_written[auxnum] = value
            yield write(savesnap_label(self.ctx.pid, auxnum), value)


class _AuxState:
    """Per aux-instance bookkeeping; fresh for every instance."""

    __slots__ = ("senders", "seen", "rts", "counts", "sigma", "round",
                 "announced", "bad_start", "starts")

    def __init__(self, pid: int):
        self.senders = {pid}
        self.seen: dict[int, dict[int, frozenset]] = {}
        self.rts: dict[int, int] = {}
        self.counts: dict[int, set[int]] = {}
        self.sigma: set = set()
        self.round = 0
        self.announced: set[int] = set()
        self.bad_start: dict[int, int] = {}
        self.starts: dict[int, tuple] = {}
