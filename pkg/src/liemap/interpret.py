"""Translate a Lie map back into polynomial ODE coefficients.

The forward builder is a smooth function from right-hand-side
coefficients to weight blocks, so the inverse problem is posed as
least-squares minimization of the block mismatch with the builder in the
loop.  Gradients of the mismatch are central finite differences (the
objective is smooth in the coefficients), and the descent uses
Barzilai-Borwein step sizes safeguarded by backtracking.

The inverse is not unique in general: different coefficient sets can
generate nearby maps at finite truncation order.  The per-block residual
report makes the achieved gap explicit, and a sparsity template lets the
caller pin coefficients to zero to impose structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .builder import BuilderConfig, LieMap, build_map
from .errors import NoPrincipalLogError
from .monomial import monomial_count
from .odes import PolynomialODE


def linear_log(m: LieMap) -> np.ndarray:
    """Generator of the linear part: ``A`` with ``expm(A*dt) = W_1``.

    Requires a principal logarithm, i.e. no eigenvalue of ``W_1`` on the
    closed negative real axis.  The result is verified by re-exponentiating;
    a max-abs residual above 1e-8 is treated as failure.
    """
    if m.dt == 0.0:
        raise ValueError("cannot recover a generator from a zero time step")
    w1 = m.weights[1]
    eigs = np.linalg.eigvals(w1)
    for lam in eigs:
        if abs(lam.imag) <= 1e-12 * max(1.0, abs(lam)) and lam.real <= 0.0:
            raise NoPrincipalLogError(
                f"eigenvalue {lam} of the linear block lies on the closed "
                "negative real axis; no principal logarithm exists"
            )
    log_w1 = scipy.linalg.logm(w1)
    if np.max(np.abs(log_w1.imag)) > 1e-10 * max(1.0, np.max(np.abs(log_w1))):
        raise NoPrincipalLogError(
            "matrix logarithm of the linear block is not real"
        )
    a = log_w1.real / m.dt
    residual = np.max(np.abs(scipy.linalg.expm(a * m.dt) - w1))
    if residual >= 1e-8:
        raise NoPrincipalLogError(
            f"logarithm verification failed: max-abs residual {residual:.3e}"
        )
    return a


@dataclass
class SparsityTemplate:
    """Boolean masks over ODE coefficient positions; True = free parameter,
    False = pinned to exactly zero."""

    masks: list[np.ndarray]

    def __post_init__(self):
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]
        if not self.masks:
            raise ValueError("template needs at least the degree-0 mask")
        n = self.masks[0].shape[0]
        for k, mask in enumerate(self.masks):
            want = (n, monomial_count(n, k))
            if mask.shape != want:
                raise ValueError(f"mask {k} has shape {mask.shape}, "
                                 f"expected {want}")

    @property
    def n(self) -> int:
        return self.masks[0].shape[0]

    @property
    def degree(self) -> int:
        return len(self.masks) - 1

    @classmethod
    def all_free(cls, n: int, degree: int) -> "SparsityTemplate":
        return cls([np.ones((n, monomial_count(n, k)), dtype=bool)
                    for k in range(degree + 1)])


def save_template(template: SparsityTemplate, path) -> None:
    doc = {"masks": [m.tolist() for m in template.masks]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_template(path) -> SparsityTemplate:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if "masks" not in doc:
        raise ValueError(f"{path}: template document is missing 'masks'")
    return SparsityTemplate([np.asarray(m, dtype=bool) for m in doc["masks"]])


@dataclass
class MapToOdeResult:
    ode: PolynomialODE
    block_residuals: list[float]
    total_residual: float
    converged: bool
    iterations: int


def _block_residuals(candidate: PolynomialODE, target: LieMap,
                     config: BuilderConfig) -> list[float]:
    built = build_map(candidate, target.dt, config)
    return [float(np.sum((bw - w) ** 2))
            for bw, w in zip(built.weights, target.weights)]


def map_to_ode(m: LieMap, degree: int,
               template: SparsityTemplate | None = None,
               builder_config: BuilderConfig | None = None,
               residual_threshold: float = 1e-8,
               max_iterations: int = 500) -> MapToOdeResult:
    """Recover ODE coefficients whose built map matches ``m``.

    Minimizes the summed squared block mismatch over the free
    coefficients (all of them unless ``template`` pins some to zero).
    Initialization takes the linear block from :func:`linear_log` where
    that exists and ``W_k / dt`` for the other degrees.  The result
    always carries the residual actually achieved; ``converged`` is
    simply ``total_residual <= residual_threshold``, never enforced
    silently.
    """
    if degree < 1:
        raise ValueError(f"target degree must be >= 1, got {degree}")
    if m.dt == 0.0:
        raise ValueError("cannot invert a zero-time-step map")
    n = m.n
    if template is None:
        template = SparsityTemplate.all_free(n, degree)
    if template.n != n or template.degree != degree:
        raise ValueError(
            f"template is for n={template.n}, degree={template.degree}; "
            f"expected n={n}, degree={degree}"
        )
    config = builder_config or BuilderConfig(order=m.order)
    if config.order != m.order:
        raise ValueError(f"builder order {config.order} must equal map order "
                         f"{m.order}")

    blocks = [np.zeros((n, monomial_count(n, k))) for k in range(degree + 1)]
    for k in range(min(degree, m.order) + 1):
        if k == 1:
            continue
        blocks[k] = m.weights[k] / m.dt
    try:
        blocks[1] = linear_log(m)
    except NoPrincipalLogError:
        pass  # keep the zero initialization
    for k in range(degree + 1):
        blocks[k] = np.where(template.masks[k], blocks[k], 0.0)

    names = list(m.variable_names)

    def unpack(theta: np.ndarray) -> PolynomialODE:
        out = []
        pos = 0
        for k in range(degree + 1):
            block = np.zeros((n, monomial_count(n, k)))
            count = int(template.masks[k].sum())
            block[template.masks[k]] = theta[pos:pos + count]
            pos += count
            out.append(block)
        return PolynomialODE(coeffs=out, variable_names=names)

    def pack(blocks) -> np.ndarray:
        return np.concatenate(
            [b[mask] for b, mask in zip(blocks, template.masks)]
        ) if any(mask.any() for mask in template.masks) else np.zeros(0)

    def objective(theta: np.ndarray) -> float:
        return float(sum(_block_residuals(unpack(theta), m, config)))

    def gradient(theta: np.ndarray) -> np.ndarray:
        g = np.zeros_like(theta)
        for i in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[i]))
            up = theta.copy()
            up[i] += h
            down = theta.copy()
            down[i] -= h
            g[i] = (objective(up) - objective(down)) / (2.0 * h)
        return g

    theta = pack(blocks)
    iterations = 0
    if theta.size > 0:
        f = objective(theta)
        g = gradient(theta)
        prev_theta, prev_g = None, None
        step = 1.0
        for iterations in range(1, max_iterations + 1):
            gnorm2 = float(g @ g)
            if f <= 1e-18 or np.sqrt(gnorm2) <= 1e-12:
                break
            if prev_theta is not None:
                s = theta - prev_theta
                y = g - prev_g
                sy = float(s @ y)
                yy = float(y @ y)
                if yy > 0.0 and sy > 0.0:
                    step = sy / yy
            # backtracking safeguard: require an Armijo decrease
            while step > 1e-18:
                trial = theta - step * g
                f_trial = objective(trial)
                if f_trial <= f - 1e-4 * step * gnorm2:
                    break
                step *= 0.5
            else:
                break
            prev_theta, prev_g = theta, g
            theta, f = trial, f_trial
            g = gradient(theta)

    result_ode = unpack(theta)
    block_residuals = _block_residuals(result_ode, m, config)
    total = float(sum(block_residuals))
    return MapToOdeResult(
        ode=result_ode,
        block_residuals=block_residuals,
        total_residual=total,
        converged=total <= residual_threshold,
        iterations=iterations,
    )
