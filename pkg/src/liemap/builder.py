"""Construction, composition and serialization of truncated Lie maps.

A Lie map advances a state by one fixed time step ``dt``::

    y = W_0 + W_1 x + W_2 x^[2] + ... + W_K x^[K]

where ``x^[k]`` is the reduced Kronecker power of the state.  For a
polynomial ODE the weight blocks solve a linear matrix initial-value
problem: stack the reduced powers of degrees 0..K into one long vector;
its time derivative along solutions is a constant matrix (assembled from
the ODE's induced blocks) times itself, so the fundamental matrix of
that linear system, evaluated at ``dt``, contains every ``W_k`` in its
degree-1 row block.  The fundamental matrix is integrated here with
fixed-step classical Runge-Kutta.

Without constant terms the stacked system is block upper-triangular in
degree, which makes truncation exact: blocks of order <= K never depend
on discarded higher orders.  A nonzero constant term adds one
subdiagonal coupling, so truncation then carries the usual series error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, LieMapError
from .monomial import basis, monomial_count, poly_mul, poly_pow
from .odes import PolynomialODE


def _default_names(n: int) -> list[str]:
    return [f"x{i+1}" for i in range(n)]


@dataclass
class LieMap:
    """Weight blocks of a single-step polynomial map.

    ``weights[k]`` has shape ``(n, C(n+k-1, k))``; ``weights[0]`` is the
    constant term as an ``(n, 1)`` column.  Treated as immutable after
    construction.
    """

    weights: list[np.ndarray]
    dt: float
    variable_names: list[str] | None = None

    def __post_init__(self):
        if len(self.weights) < 2:
            raise ValueError("a map needs at least the W_0 and W_1 blocks")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        n = self.weights[0].shape[0]
        for k, w in enumerate(self.weights):
            want = (n, monomial_count(n, k))
            if w.shape != want:
                raise ValueError(f"block {k} has shape {w.shape}, expected {want}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"non-finite weight in block {k}")
        if not np.isfinite(self.dt):
            raise ValueError(f"non-finite dt: {self.dt}")
        if self.variable_names is None:
            self.variable_names = _default_names(n)
        elif len(self.variable_names) != n:
            raise ValueError(
                f"{len(self.variable_names)} variable names for dimension {n}"
            )

    @property
    def n(self) -> int:
        return self.weights[0].shape[0]

    @property
    def order(self) -> int:
        return len(self.weights) - 1

    def truncated(self, order: int) -> "LieMap":
        """Copy keeping only blocks up to ``order``."""
        if not 1 <= order <= self.order:
            raise ValueError(f"order must be in [1, {self.order}], got {order}")
        return LieMap(
            weights=[w.copy() for w in self.weights[: order + 1]],
            dt=self.dt,
            variable_names=list(self.variable_names),
        )


def identity_map(n: int, order: int, dt: float = 0.0,
                 variable_names: list[str] | None = None) -> LieMap:
    """The map that returns its input unchanged: W_1 = I, all else 0."""
    weights = [np.zeros((n, monomial_count(n, k))) for k in range(order + 1)]
    weights[1] = np.eye(n)
    return LieMap(weights=weights, dt=dt, variable_names=variable_names)


@dataclass
class BuilderConfig:
    """Settings for :func:`build_map`.

    ``substeps`` fixed-length Runge-Kutta steps cover one ``dt``; the
    classical 4th-order scheme is the only integrator in v1.
    """

    order: int
    substeps: int = 100
    integrator: str = "rk4"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.integrator != "rk4":
            raise ValueError(f"unknown integrator {self.integrator!r}")


def _degree_offsets(n: int, order: int) -> tuple[list[int], list[int]]:
    sizes = [monomial_count(n, k) for k in range(order + 1)]
    offsets = [0]
    for s in sizes:
        offsets.append(offsets[-1] + s)
    return sizes, offsets


def stacked_generator(ode: PolynomialODE, order: int) -> np.ndarray:
    """Generator matrix of the stacked monomial dynamics up to ``order``.

    Row/column blocks follow degrees 0..order; entry block ``(i, j)`` is
    the ODE's induced block, zero outside the reachable band.
    """
    n = ode.n
    sizes, offsets = _degree_offsets(n, order)
    gen = np.zeros((offsets[-1], offsets[-1]))
    for i in range(1, order + 1):
        for k in range(ode.degree + 1):
            j = i - 1 + k
            if j > order:
                continue
            gen[offsets[i]:offsets[i] + sizes[i],
                offsets[j]:offsets[j] + sizes[j]] = ode.induced_block(i, j)
    return gen


def build_map(ode: PolynomialODE, dt: float, config: BuilderConfig) -> LieMap:
    """Integrate the stacked fundamental matrix to obtain the map at ``dt``."""
    if not np.isfinite(dt):
        raise ValueError(f"non-finite dt: {dt}")
    n = ode.n
    order = config.order
    sizes, offsets = _degree_offsets(n, order)
    gen = stacked_generator(ode, order)
    fund = np.eye(offsets[-1])
    h = dt / config.substeps
    for step in range(config.substeps):
        k1 = gen @ fund
        k2 = gen @ (fund + 0.5 * h * k1)
        k3 = gen @ (fund + 0.5 * h * k2)
        k4 = gen @ (fund + h * k3)
        fund = fund + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(fund)):
            raise DivergenceError(
                f"map integration diverged at substep {step + 1} of "
                f"{config.substeps} (dt={dt}, order={order})",
                step_index=step + 1,
            )
    row = slice(offsets[1], offsets[1] + n)
    weights = [fund[row, offsets[k]:offsets[k] + sizes[k]].copy()
               for k in range(order + 1)]
    return LieMap(weights=weights, dt=dt,
                  variable_names=list(ode.variable_names))


def compose(first: LieMap, second: LieMap, order: int | None = None) -> LieMap:
    """Polynomial composition ``second after first`` truncated at ``order``.

    Substitutes the polynomial map of ``first`` into every monomial of
    ``second`` and drops terms above the output order (defaults to the
    larger of the two input orders).  The step of the result is the sum
    of the two steps.
    """
    if first.n != second.n:
        raise ValueError(f"dimension mismatch: {first.n} vs {second.n}")
    n = first.n
    if order is None:
        order = max(first.order, second.order)
    if order < 1:
        raise ValueError(f"output order must be >= 1, got {order}")
    zero = (0,) * n

    inner = []
    for m in range(n):
        p: dict[tuple[int, ...], float] = {}
        for k in range(first.order + 1):
            for col, entry in enumerate(basis(n, k).entries):
                c = first.weights[k][m, col]
                if c != 0.0:
                    p[entry.exponents] = p.get(entry.exponents, 0.0) + c
        inner.append(p)

    acc: list[dict[tuple[int, ...], float]] = [{} for _ in range(n)]
    for m in range(n):
        c = second.weights[0][m, 0]
        if c != 0.0:
            acc[m][zero] = c
    for k in range(1, second.order + 1):
        for col, entry in enumerate(basis(n, k).entries):
            wcol = second.weights[k][:, col]
            if not np.any(wcol != 0.0):
                continue
            mono = {zero: 1.0}
            for var, e in enumerate(entry.exponents):
                if e > 0:
                    mono = poly_mul(mono, poly_pow(inner[var], e, n, max_degree=order),
                                    max_degree=order)
            for m in range(n):
                c = wcol[m]
                if c == 0.0:
                    continue
                for exps, val in mono.items():
                    acc[m][exps] = acc[m].get(exps, 0.0) + c * val

    weights = [np.zeros((n, monomial_count(n, k))) for k in range(order + 1)]
    lookups = [
        {b.exponents: col for col, b in enumerate(basis(n, k).entries)}
        for k in range(order + 1)
    ]
    for m in range(n):
        for exps, val in acc[m].items():
            k = sum(exps)
            weights[k][m, lookups[k][exps]] += val
    return LieMap(weights=weights, dt=first.dt + second.dt,
                  variable_names=list(first.variable_names))


# ---------------------------------------------------------------------------
# Map document format: the JSON contract between CLI subcommands.  Floats
# are written with 17 significant digits so a written document parses back
# to bitwise-identical blocks.


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_map(m: LieMap) -> str:
    names = ", ".join(json.dumps(v) for v in m.variable_names)
    lines = [
        "{",
        f'  "n": {m.n},',
        f'  "order": {m.order},',
        f'  "dt": {_fmt(m.dt)},',
        f'  "variable_names": [{names}],',
        '  "weights": [',
    ]
    for k, w in enumerate(m.weights):
        rows = ",\n".join(
            "      [" + ", ".join(_fmt(v) for v in row) + "]" for row in w
        )
        trailing = "," if k < m.order else ""
        lines.append(f"    [\n{rows}\n    ]{trailing}")
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def loads_map(text: str) -> LieMap:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LieMapError(f"invalid map document: {exc}") from exc
    for key in ("n", "order", "dt", "variable_names", "weights"):
        if key not in doc:
            raise LieMapError(f"map document is missing field {key!r}")
    n, order = int(doc["n"]), int(doc["order"])
    weights = [np.array(w, dtype=float) for w in doc["weights"]]
    if len(weights) != order + 1:
        raise LieMapError(
            f"map document declares order {order} but has {len(weights)} blocks"
        )
    m = LieMap(weights=weights, dt=float(doc["dt"]),
               variable_names=[str(v) for v in doc["variable_names"]])
    if m.n != n:
        raise LieMapError(f"map document declares n={n}, blocks imply n={m.n}")
    return m


def write_map(m: LieMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_map(m))


def read_map(path) -> LieMap:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_map(fh.read())
