"""Forward passes for the gated recurrent cells.

Two cell types share one gate structure:

* the plain GRU baseline, whose input weights ``W`` are fixed matrices;
* the context-integrated cell, whose input weights are functions of the
  context: each scalar weight is a learned linear combination of basis
  monomials, which collapses into fixed coefficient matrices ``A`` acting
  on the Kronecker expansion ``x_t (x) G(z_t)``.

Gates have no bias terms; only the output layer carries a bias. The
output activation is the identity (regression), kept as an extension
point in :func:`output`. The initial hidden state is a constant zero
vector and is not trainable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, eval_basis
from .numerics import Rng, ShapeError, kron, sigmoid, tanh


@dataclass
class GruParams:
    """Baseline GRU parameters: W* (n_h, n_x), U* (n_h, n_h), V (n_y, n_h)."""

    Ws: np.ndarray
    Wh: np.ndarray
    Wr: np.ndarray
    Us: np.ndarray
    Uh: np.ndarray
    Ur: np.ndarray
    V: np.ndarray
    b_y: np.ndarray

    def __post_init__(self):
        n_h, n_x = self.Ws.shape
        for name in ("Wh", "Wr"):
            if getattr(self, name).shape != (n_h, n_x):
                raise ShapeError(f"{name} must be ({n_h}, {n_x}), got {getattr(self, name).shape}")
        for name in ("Us", "Uh", "Ur"):
            if getattr(self, name).shape != (n_h, n_h):
                raise ShapeError(f"{name} must be ({n_h}, {n_h}), got {getattr(self, name).shape}")
        if self.V.ndim != 2 or self.V.shape[1] != n_h:
            raise ShapeError(f"V must be (n_y, {n_h}), got {self.V.shape}")
        if self.b_y.shape != (self.V.shape[0],):
            raise ShapeError(f"b_y must be ({self.V.shape[0]},), got {self.b_y.shape}")

    @property
    def n_x(self) -> int:
        return self.Ws.shape[1]

    @property
    def n_h(self) -> int:
        return self.Ws.shape[0]

    @property
    def n_y(self) -> int:
        return self.V.shape[0]


@dataclass
class CiRnnParams:
    """Context-cell parameters: A* (n_h, n_x*m) coefficients, U*, V, b_y."""

    As: np.ndarray
    Ah: np.ndarray
    Ar: np.ndarray
    Us: np.ndarray
    Uh: np.ndarray
    Ur: np.ndarray
    V: np.ndarray
    b_y: np.ndarray
    basis: BasisSpec

    def __post_init__(self):
        n_h, cols = self.As.shape
        if cols % self.basis.m != 0:
            raise ShapeError(
                f"As has {cols} columns, not a multiple of basis size {self.basis.m}"
            )
        for name in ("Ah", "Ar"):
            if getattr(self, name).shape != (n_h, cols):
                raise ShapeError(f"{name} must be ({n_h}, {cols}), got {getattr(self, name).shape}")
        for name in ("Us", "Uh", "Ur"):
            if getattr(self, name).shape != (n_h, n_h):
                raise ShapeError(f"{name} must be ({n_h}, {n_h}), got {getattr(self, name).shape}")
        if self.V.ndim != 2 or self.V.shape[1] != n_h:
            raise ShapeError(f"V must be (n_y, {n_h}), got {self.V.shape}")
        if self.b_y.shape != (self.V.shape[0],):
            raise ShapeError(f"b_y must be ({self.V.shape[0]},), got {self.b_y.shape}")

    @property
    def n_x(self) -> int:
        return self.As.shape[1] // self.basis.m

    @property
    def n_h(self) -> int:
        return self.As.shape[0]

    @property
    def n_y(self) -> int:
        return self.V.shape[0]


def _glorot(rng: Rng, rows: int, cols: int) -> np.ndarray:
    # fan_in = column count, fan_out = row count
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform_array(-limit, limit, (rows, cols))


def init_gru(n_x: int, n_h: int, n_y: int, rng: Rng) -> GruParams:
    """Uniform +-sqrt(6/(fan_in+fan_out)) init, zero output bias.

    Draw order is fixed (Ws, Wh, Wr, Us, Uh, Ur, V) so a seed pins the
    parameters exactly.
    """
    return GruParams(
        Ws=_glorot(rng, n_h, n_x),
        Wh=_glorot(rng, n_h, n_x),
        Wr=_glorot(rng, n_h, n_x),
        Us=_glorot(rng, n_h, n_h),
        Uh=_glorot(rng, n_h, n_h),
        Ur=_glorot(rng, n_h, n_h),
        V=_glorot(rng, n_y, n_h),
        b_y=np.zeros(n_y),
    )


def init_cirnn(n_x: int, n_h: int, n_y: int, basis: BasisSpec, rng: Rng) -> CiRnnParams:
    """Same init scheme as :func:`init_gru` with A* of width n_x * m."""
    cols = n_x * basis.m
    return CiRnnParams(
        As=_glorot(rng, n_h, cols),
        Ah=_glorot(rng, n_h, cols),
        Ar=_glorot(rng, n_h, cols),
        Us=_glorot(rng, n_h, n_h),
        Uh=_glorot(rng, n_h, n_h),
        Ur=_glorot(rng, n_h, n_h),
        V=_glorot(rng, n_y, n_h),
        b_y=np.zeros(n_y),
    )


def context_weights(coeff: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Materialize the effective input-weight matrix at one context.

    ``coeff`` is (n_h, n_x*m); entry (k, i) of the result is the dot
    product of the length-m coefficient block for (k, i) with the basis
    vector ``g``. Used by the elementwise-form forward and the weight
    export.
    """
    n_h, cols = coeff.shape
    m = g.shape[0]
    if cols % m != 0:
        raise ShapeError(f"coefficient width {cols} is not a multiple of basis size {m}")
    return coeff.reshape(n_h, cols // m, m) @ g


def _check_vec(name: str, v, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (n,):
        raise ShapeError(f"{name} must have shape ({n},), got {v.shape}")
    return v


def gru_step(p: GruParams, x_t, h_prev):
    """One baseline step; returns (h_t, gate record for the trace)."""
    x_t = _check_vec("x_t", x_t, p.n_x)
    h_prev = _check_vec("h_prev", h_prev, p.n_h)
    r = sigmoid(p.Wr @ x_t + p.Ur @ h_prev)
    s = sigmoid(p.Ws @ x_t + p.Us @ h_prev)
    h_tilde = tanh(p.Wh @ x_t + p.Uh @ (r * h_prev))
    h = s * h_prev + (1.0 - s) * h_tilde
    return h, {"r": r, "s": s, "h_tilde": h_tilde}


def cirnn_step(p: CiRnnParams, x_t, z_t, h_prev):
    """One context-cell step; the input pathway acts on x_t (x) G(z_t)."""
    x_t = _check_vec("x_t", x_t, p.n_x)
    z_t = _check_vec("z_t", z_t, p.basis.n_z)
    h_prev = _check_vec("h_prev", h_prev, p.n_h)
    g = eval_basis(p.basis, z_t)
    phi = kron(x_t, g)
    r = sigmoid(p.Ar @ phi + p.Ur @ h_prev)
    s = sigmoid(p.As @ phi + p.Us @ h_prev)
    h_tilde = tanh(p.Ah @ phi + p.Uh @ (r * h_prev))
    h = s * h_prev + (1.0 - s) * h_tilde
    return h, {"g": g, "phi": phi, "r": r, "s": s, "h_tilde": h_tilde}


@dataclass
class StepTrace:
    """Per-timestep record of everything the backward pass needs.

    ``zs``, ``gs`` and ``phis`` are None for the baseline cell, whose
    gates read ``xs`` directly. ``hs[t]`` is the state AFTER step t;
    the state before step 0 is ``h0``.
    """

    xs: list = field(default_factory=list)
    zs: list | None = None
    gs: list | None = None
    phis: list | None = None
    rs: list = field(default_factory=list)
    ss: list = field(default_factory=list)
    h_tildes: list = field(default_factory=list)
    hs: list = field(default_factory=list)
    h0: np.ndarray | None = None
    y_hat: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.xs)

    def h_before(self, t: int) -> np.ndarray:
        return self.h0 if t == 0 else self.hs[t - 1]

    def gate_inputs(self) -> list:
        """The vectors the input weights act on: phis or raw xs."""
        return self.phis if self.phis is not None else self.xs


def output(p, h_t) -> np.ndarray:
    """Output layer: identity activation over V h + b_y."""
    h_t = _check_vec("h_t", h_t, p.n_h)
    return p.V @ h_t + p.b_y


def forward_sequence(p, xs, zs=None, h0=None):
    """Run a whole window and return (final prediction, full trace).

    ``zs`` must be given exactly when ``p`` is a context cell. ``h0``
    defaults to zeros. Only the final-step prediction is emitted
    (many-to-one); the trace carries every intermediate.
    """
    is_ctx = isinstance(p, CiRnnParams)
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    if len(xs) == 0:
        raise ShapeError("forward_sequence: empty input sequence")
    if is_ctx:
        if zs is None:
            raise ShapeError("context cell requires a context sequence")
        zs = [np.asarray(z, dtype=np.float64) for z in zs]
        if len(zs) != len(xs):
            raise ShapeError(f"ragged lengths: {len(xs)} inputs vs {len(zs)} contexts")
    elif zs is not None:
        raise ShapeError("baseline cell takes no context sequence")

    h = np.zeros(p.n_h) if h0 is None else _check_vec("h0", h0, p.n_h)
    trace = StepTrace(h0=h)
    if is_ctx:
        trace.zs, trace.gs, trace.phis = [], [], []
    for t, x_t in enumerate(xs):
        if is_ctx:
            h, rec = cirnn_step(p, x_t, zs[t], h)
            trace.zs.append(zs[t])
            trace.gs.append(rec["g"])
            trace.phis.append(rec["phi"])
        else:
            h, rec = gru_step(p, x_t, h)
        trace.xs.append(x_t)
        trace.rs.append(rec["r"])
        trace.ss.append(rec["s"])
        trace.h_tildes.append(rec["h_tilde"])
        trace.hs.append(h)
    trace.y_hat = output(p, h)
    return trace.y_hat, trace
