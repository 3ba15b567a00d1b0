"""Import-time selection between the compiled core and the NumPy fallback.

The compiled extension ``orbitmc._core`` accelerates trajectory rollouts for
targets that carry a packed descriptor (all built-in benchmark targets do).
If it is missing, or ``ORBITMC_FORCE_PUREPY=1`` is set, every call routes to
the pure-NumPy twin in :mod:`orbitmc._purepy`.  Targets without a descriptor
always use the fallback regardless of backend.
"""

import os

from . import _purepy

try:
    from . import _core
except ImportError:  # extension not built; NumPy twin handles everything
    _core = None

HAVE_COMPILED = _core is not None

_mode = "auto"
if os.environ.get("ORBITMC_FORCE_PUREPY"):
    _mode = "purepy"


def set_backend(mode: str) -> None:
    """Select 'auto', 'core', or 'purepy' for subsequent rollouts."""
    if mode not in ("auto", "core", "purepy"):
        raise ValueError(f"unknown backend mode {mode!r}")
    if mode == "core" and not HAVE_COMPILED:
        raise RuntimeError("compiled core requested but orbitmc._core is not built")
    global _mode
    _mode = mode


def backend_name() -> str:
    if _mode == "purepy" or not HAVE_COMPILED:
        return "purepy"
    return "core"


def _use_core(target) -> bool:
    if _mode == "purepy" or _core is None:
        return False
    return target.core_spec is not None


def rollout(target, x0, v0, eps, beta, n_fwd, n_bwd):
    """See :func:`orbitmc._purepy.rollout`."""
    if _use_core(target):
        s = target.core_spec
        return _core.rollout(
            s.kind, s.f0, s.f1, s.i0, s.i1, s.meta, x0, v0, eps, beta, n_fwd, n_bwd
        )
    return _purepy.rollout(target, x0, v0, eps, beta, n_fwd, n_bwd)


def contracting_orbit(target, x0, v0, eps, beta, log_w_threshold, max_steps):
    """See :func:`orbitmc._purepy.contracting_orbit`."""
    if _use_core(target):
        s = target.core_spec
        return _core.contracting_orbit(
            s.kind, s.f0, s.f1, s.i0, s.i1, s.meta,
            x0, v0, eps, beta, log_w_threshold, max_steps,
        )
    return _purepy.contracting_orbit(
        target, x0, v0, eps, beta, log_w_threshold, max_steps
    )


def core_logp_grad(target, x):
    """Direct descriptor-path density/gradient evaluation (parity testing)."""
    if _core is None or target.core_spec is None:
        raise RuntimeError("compiled core or descriptor unavailable")
    s = target.core_spec
    return _core.logp_grad(s.kind, s.f0, s.f1, s.i0, s.i1, s.meta, x)
