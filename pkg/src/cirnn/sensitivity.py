"""Forward-accumulated gradients, used only to verify the BPTT path.

Instead of reverse accumulation, this carries the running sensitivity of
the hidden state to every parameter group forward in time:

    S_t = J_t S_{t-1} + E_t

where J_t is the state-to-state Jacobian and E_t the explicit (current
step only) derivative. The final-step loss gradient is then the output
delta pushed through S_T. Cost grows with the parameter count times
n_h, so keep T and the dimensions small; the production path is
``training.backward``.
"""

from __future__ import annotations

import numpy as np

from .cells import CiRnnParams, GruParams, forward_sequence
from .training import Gradients


def state_jacobian(p, trace, t: int) -> np.ndarray:
    """Dense Jacobian of h_t with respect to h_{t-1} at trace step t.

    Composed of the direct carry diag(s), the update-gate route through
    Us, and the candidate route through Uh (with its reset-gate branch
    through Ur).
    """
    r, s, ht = trace.rs[t], trace.ss[t], trace.h_tildes[t]
    h_prev = trace.h_before(t)
    ds = s * (1.0 - s)
    dr = r * (1.0 - r)
    dth = 1.0 - ht * ht

    jac = np.diag(s)
    jac += ((h_prev - ht) * ds)[:, None] * p.Us
    cand = p.Uh * r[None, :] + (p.Uh * (h_prev * dr)[None, :]) @ p.Ur
    jac += ((1.0 - s) * dth)[:, None] * cand
    return jac


def _explicit_terms(p, trace, t: int) -> dict[str, np.ndarray]:
    """Explicit derivative of h_t per group, flattened to (n_h, rows*cols).

    Each group factors as E[i, (k, j)] = M[i, k] * w[j]: M maps the
    group's pre-activation row k into h, w is the vector the group
    multiplies.
    """
    r, s, ht = trace.rs[t], trace.ss[t], trace.h_tildes[t]
    h_prev = trace.h_before(t)
    phi = trace.gate_inputs()[t]
    ds = s * (1.0 - s)
    dr = r * (1.0 - r)
    dth = 1.0 - ht * ht

    m_set = np.diag((h_prev - ht) * ds)
    m_cand = np.diag((1.0 - s) * dth)
    m_reset = ((1.0 - s) * dth)[:, None] * p.Uh * (h_prev * dr)[None, :]

    def expand(m, w):
        return np.einsum("ik,j->ikj", m, w).reshape(p.n_h, -1)

    return {
        "As": expand(m_set, phi),
        "Ah": expand(m_cand, phi),
        "Ar": expand(m_reset, phi),
        "Us": expand(m_set, h_prev),
        "Uh": expand(m_cand, r * h_prev),
        "Ur": expand(m_reset, h_prev),
    }


def forward_sensitivity_gradients(p, xs, zs, y) -> Gradients:
    """Gradients of the final-step L2 loss via forward accumulation."""
    if isinstance(p, CiRnnParams):
        y_hat, trace = forward_sequence(p, xs, zs)
        n_in = p.As.shape[1]
    elif isinstance(p, GruParams):
        y_hat, trace = forward_sequence(p, xs)
        n_in = p.n_x
    else:
        raise TypeError(f"unsupported parameter type {type(p)!r}")

    n_h = p.n_h
    shapes = {
        "As": (n_h, n_in), "Ah": (n_h, n_in), "Ar": (n_h, n_in),
        "Us": (n_h, n_h), "Uh": (n_h, n_h), "Ur": (n_h, n_h),
    }
    sens = {name: np.zeros((n_h, rows * cols)) for name, (rows, cols) in shapes.items()}

    for t in range(len(trace)):
        jac = state_jacobian(p, trace, t)
        explicit = _explicit_terms(p, trace, t)
        for name in sens:
            sens[name] = jac @ sens[name] + explicit[name]

    y = np.asarray(y, dtype=np.float64)
    delta_y = y_hat - y
    dh = p.V.T @ delta_y
    grads = {name: (dh @ s_mat).reshape(shapes[name]) for name, s_mat in sens.items()}
    dV = np.outer(delta_y, trace.hs[-1])
    db_y = delta_y.copy()
    return Gradients(
        grads["As"], grads["Ah"], grads["Ar"],
        grads["Us"], grads["Uh"], grads["Ur"], dV, db_y,
    )
