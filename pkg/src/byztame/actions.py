"""Step actions yielded by process generators.

Protocol code is written as generators; each yielded action occupies exactly
one scheduler step. Actions are plain tuples to keep the hot loop cheap.
"""

READ = "read"
WRITE = "write"
SIGN = "sign"
LOCAL = "local"
INVOKE = "inv"
RESPOND = "res"


def read(owner: int, label: str):
    """Read register (owner, label); resumes with the stored value."""
    return (READ, owner, label)


def write(label: str, value):
    """Write the caller's own register `label`; resumes with None."""
    return (WRITE, label, value)


def sign(payload):
    """Request a signature over payload as the caller; resumes with a SignedValue."""
    return (SIGN, payload)


def local(note: str = ""):
    """A pure local transition (one step, no register access)."""
    return (LOCAL, note)


def invoke(op: str, args: tuple):
    """Record an object-level invocation event at this step."""
    return (INVOKE, op, args)


def respond(value):
    """Record an object-level response event at this step."""
    return (RESPOND, value)
