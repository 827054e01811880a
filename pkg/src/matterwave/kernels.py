"""Hot-loop kernels: compiled extension when available, NumPy otherwise.

The backend is chosen at import.  :func:`use_backend` switches it at runtime
(benchmarks and equivalence tests use this).
"""
import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

backend = "compiled" if _ckernels is not None else "python"
cheb_term = BACKENDS[backend].cheb_term
apply_mask = BACKENDS[backend].apply_mask


def available_backends():
    return sorted(BACKENDS)


def use_backend(name):
    """Select ``"compiled"`` or ``"python"`` kernels; returns the previous name."""
    global backend, cheb_term, apply_mask
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available_backends()}")
    previous = backend
    backend = name
    cheb_term = BACKENDS[name].cheb_term
    apply_mask = BACKENDS[name].apply_mask
    log.debug("kernel backend: %s", name)
    return previous
