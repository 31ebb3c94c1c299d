"""Binary chain checkpoints.

Layout (all integers little-endian):

    b"PRLC"                 magic
    u16                     format version
    u32                     header length in bytes
    header                  UTF-8 JSON: lattice descriptor, group, sweep
                            counter, RNG seed/chain, step sizes, array shapes
    float64[...]            link quaternions (E x 4), little-endian
    float64[...]            Higgs quaternions (V x 4), joint chains only

The stream position of the counter-based generator is fully described by
``(seed, chain, sweep)``, so resuming reproduces the uninterrupted run bit
for bit.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import IntegrityError
from .mcmc import ChainState

MAGIC = b"PRLC"
VERSION = 1


def save_checkpoint(path, state: ChainState, lattice_descriptor: dict, group: str, extra=None) -> None:
    header = {
        "lattice": lattice_descriptor,
        "group": group,
        "sweep": int(state.sweep),
        "rng": {"generator": "philox-block", "seed": int(state.seed), "chain": int(state.chain),
                "sweep": int(state.sweep)},
        "energy": float(state.energy),
        "step": float(state.step),
        "higgs_step": float(state.higgs_step),
        "counters": [int(state.accepted_edges), int(state.accepted_sites),
                     int(state.proposed_edges), int(state.proposed_sites)],
        "shapes": {"U": list(state.U.shape), "phi": None if state.phi is None else list(state.phi.shape)},
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(state.U, dtype="<f8").tobytes())
        if state.phi is not None:
            fh.write(np.ascontiguousarray(state.phi, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ChainState, dict]:
    """Returns the chain state and the decoded header."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise IntegrityError("not a checkpoint file (bad magic)")
    try:
        version, hlen = struct.unpack_from("<HI", data, 4)
    except struct.error as exc:
        raise IntegrityError("truncated checkpoint header") from exc
    if version != VERSION:
        raise IntegrityError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<HI")
    try:
        header = json.loads(data[off:off + hlen].decode("utf-8"))
        ushape = tuple(header["shapes"]["U"])
        pshape = None if header["shapes"]["phi"] is None else tuple(header["shapes"]["phi"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IntegrityError(f"corrupt checkpoint header: {exc}") from exc
    off += hlen
    n = int(np.prod(ushape))
    m = 0 if pshape is None else int(np.prod(pshape))
    if off + 8 * (n + m) != len(data):
        raise IntegrityError("checkpoint has trailing or missing bytes")
    U = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(ushape).astype(float)
    off += 8 * n
    phi = None
    if pshape is not None:
        phi = np.frombuffer(data, dtype="<f8", count=m, offset=off).reshape(pshape).astype(float)
    rng = header["rng"]
    c = header["counters"]
    state = ChainState(U, phi, header["energy"], header["sweep"], rng["seed"], rng["chain"],
                       header["step"], header["higgs_step"], c[0], c[1], c[2], c[3])
    return state, header
