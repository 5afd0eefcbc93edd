"""Flattened circuit programs and the batch evaluator backend.

The compiled extension ``_kernels`` is used when it was built; otherwise the
numpy implementation in ``_kernels_py`` takes over.  Both compute the same
thing: the root value of the circuit for each row of an indicator matrix.
"""
from typing import Dict, NamedTuple

import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

HAVE_EXTENSION = _compiled is not None
_BACKENDS = {"python": _kernels_py.eval_batch}
if HAVE_EXTENSION:
    _BACKENDS["compiled"] = _compiled.eval_batch
_active = "compiled" if HAVE_EXTENSION else "python"

KIND_CODES = {"ind": 0, "dist": 1, "sum": 2, "prod": 3}


def available_backends():
    return sorted(_BACKENDS)


def backend():
    return _active


def use_backend(name):
    """Select the evaluator; returns the previously active backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} is not available (have {available_backends()})")
    previous, _active = _active, name
    return previous


class Program(NamedTuple):
    kind: np.ndarray
    ptr: np.ndarray
    child: np.ndarray
    weight: np.ndarray
    slot: np.ndarray
    dptr: np.ndarray
    dprob: np.ndarray
    offsets: Dict[str, int]
    n_slots: int


def compile_circuit(spn) -> Program:
    """Flatten *spn* into CSR arrays in children-first order, root last."""
    order = spn.bottom_up
    index = {v: i for i, v in enumerate(order)}
    offsets, n_slots = {}, 0
    for var in spn.variables:
        offsets[var.name] = n_slots
        n_slots += var.domain_size

    kind = np.empty(len(order), dtype=np.int8)
    slot = np.zeros(len(order), dtype=np.int64)
    ptr, child, weight = [0], [], []
    dptr, dprob = [0], []
    for i, v in enumerate(order):
        n = spn.nodes[v]
        kind[i] = KIND_CODES[n.kind]
        if n.kind == "ind":
            slot[i] = offsets[n.var] + n.value
        elif n.kind == "dist":
            slot[i] = offsets[n.var]
            dprob.extend(n.probs)
        else:
            kids = spn.children[v]
            child.extend(index[c] for c in kids)
            weight.extend(spn.weights[v] if n.kind == "sum" else [1.0] * len(kids))
        ptr.append(len(child))
        dptr.append(len(dprob))
    return Program(
        kind,
        np.asarray(ptr, dtype=np.int64),
        np.asarray(child, dtype=np.int64),
        np.asarray(weight, dtype=np.float64),
        slot,
        np.asarray(dptr, dtype=np.int64),
        np.asarray(dprob, dtype=np.float64),
        offsets,
        n_slots,
    )


def eval_indicators(program: Program, lam: np.ndarray, backend_name=None) -> np.ndarray:
    """Evaluate the circuit for each row of the ``(rows, n_slots)`` matrix *lam*."""
    fn = _BACKENDS[backend_name or _active]
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if lam.ndim != 2 or lam.shape[1] != program.n_slots:
        raise ValueError(f"indicator matrix must have {program.n_slots} columns")
    return fn(program.kind, program.ptr, program.child, program.weight,
              program.slot, program.dptr, program.dprob, lam)


def one_hot(program: Program, rows: np.ndarray) -> np.ndarray:
    """Indicator matrix for complete assignments; columns follow variable order."""
    lam = np.zeros((rows.shape[0], program.n_slots))
    index = np.arange(rows.shape[0])
    for j, offset in enumerate(program.offsets.values()):
        lam[index, offset + rows[:, j]] = 1.0
    return lam


def eval_assignments(program: Program, rows: np.ndarray, backend_name=None) -> np.ndarray:
    """Circuit value at each complete assignment (row of value indices)."""
    return eval_indicators(program, one_hot(program, rows), backend_name)
