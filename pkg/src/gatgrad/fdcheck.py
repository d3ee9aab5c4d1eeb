"""Independent central finite-difference oracle for the layer gradients.

Every scalar parameter entry is perturbed in place, including the bias
columns of the weight matrices, so the oracle differentiates exactly the
parameterization the analytic code does. Entries whose perturbed evaluation
lands near a LeakyReLU kink are flagged and excluded from the verdict rather
than judged: the derivative there is convention-dependent.

The quotient (L+ - L-) / (2 step) cannot resolve differences below the
rounding noise of one loss evaluation divided by the step. That floor is
reported as `resolution`, and compare_gradients treats entries whose analytic
value and disagreement both sit below it as confirmed zeros: along directions
where the loss is exactly constant (for example a uniform activation regime,
where score shifts cancel inside the softmax) the quotient is pure rounding
noise and carries no information.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .grads import PARAM_KEYS, GradientSet, relative_error
from .graph import Graph
from .layer import LayerParams, forward_with_trace

__all__ = [
    "LossSpec",
    "FdConfig",
    "FdGradient",
    "ParamCheck",
    "GradCheckReport",
    "evaluate_loss",
    "fd_gradient",
    "compare_gradients",
]

_FIELD_BY_KEY = {"theta_R": "theta_r", "theta_L": "theta_l", "a": "att", "b": "bias"}

# Rounding amplification allowed for one loss evaluation, in units of eps.
RESOLUTION_ULPS = 64.0


@dataclass(frozen=True)
class LossSpec:
    """Scalar loss over one node update.

    mode "dot": loss = vector . h_out, upstream gradient = vector. With an
    all-ones vector this is the uniform-upstream configuration.
    mode "squared_error": loss = 0.5 * ||h_out - vector||^2, upstream
    gradient = h_out - vector.
    """

    mode: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        if self.mode not in ("dot", "squared_error"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        vec = np.array(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError("loss vector must be 1-D")
        if not np.isfinite(vec).all():
            raise ValueError("non-finite loss vector")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @classmethod
    def dot(cls, g: np.ndarray) -> "LossSpec":
        return cls("dot", g)

    @classmethod
    def squared_error(cls, y: np.ndarray) -> "LossSpec":
        return cls("squared_error", y)


def evaluate_loss(h_out: np.ndarray, spec: LossSpec) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to h_out."""
    h_out = np.asarray(h_out, dtype=np.float64)
    if h_out.shape != spec.vector.shape:
        raise ValueError(
            f"h_out has shape {h_out.shape}, loss vector {spec.vector.shape}"
        )
    if spec.mode == "dot":
        return float(spec.vector @ h_out), spec.vector.copy()
    residual = h_out - spec.vector
    return 0.5 * float(residual @ residual), residual


@dataclass(frozen=True)
class FdConfig:
    step: float = 1e-5
    tolerance: float = 1e-6
    kink_guard: float = 1e-4

    def __post_init__(self) -> None:
        if not 0.0 < self.step < 1.0:
            raise ValueError("step must lie in (0, 1)")
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class FdGradient:
    """Central-difference gradients plus per-entry kink flags.

    kink_flags maps each wire name to a boolean mask of entries whose
    perturbed forward pass had some |pre-activation| below the kink guard.
    resolution is the smallest analytic/numeric difference the quotient can
    meaningfully resolve for this run.
    """

    grads: GradientSet
    kink_flags: dict[str, np.ndarray]
    resolution: float


def fd_gradient(
    params: LayerParams,
    graph: Graph,
    features: np.ndarray,
    node: int,
    spec: LossSpec,
    config: FdConfig = FdConfig(),
) -> FdGradient:
    """Central differences of the loss over every parameter entry."""

    def loss_at(p: LayerParams) -> tuple[float, bool]:
        trace = forward_with_trace(p, graph, features, node)
        value, _ = evaluate_loss(trace.h_out, spec)
        if not np.isfinite(value):
            raise ValueError("non-finite loss at a perturbed point")
        near_kink = bool(
            trace.pre_act.size
            and (np.abs(trace.pre_act) < config.kink_guard).any()
        )
        return value, near_kink

    base_value, _ = loss_at(params)
    max_abs_loss = max(1.0, abs(base_value))
    grads: dict[str, np.ndarray] = {}
    flags: dict[str, np.ndarray] = {}
    for key in PARAM_KEYS:
        field = _FIELD_BY_KEY[key]
        base = getattr(params, field)
        grad = np.zeros(base.shape)
        flag = np.zeros(base.shape, dtype=bool)
        grad_flat, flag_flat = grad.reshape(-1), flag.reshape(-1)
        for idx in range(base.size):

            def perturbed_loss(delta):
                work = base.copy()
                work.reshape(-1)[idx] += delta
                return loss_at(dataclasses.replace(params, **{field: work}))

            plus, kink_plus = perturbed_loss(config.step)
            minus, kink_minus = perturbed_loss(-config.step)
            grad_flat[idx] = (plus - minus) / (2.0 * config.step)
            flag_flat[idx] = kink_plus or kink_minus
            max_abs_loss = max(max_abs_loss, abs(plus), abs(minus))
        grads[key] = grad
        flags[key] = flag
    resolution = (
        RESOLUTION_ULPS * np.finfo(np.float64).eps * max_abs_loss / (2.0 * config.step)
    )
    return FdGradient(
        grads=GradientSet(grads["theta_R"], grads["theta_L"], grads["a"], grads["b"]),
        kink_flags=flags,
        resolution=float(resolution),
    )


@dataclass(frozen=True)
class ParamCheck:
    """Verdict for one parameter block."""

    max_rel_err: float
    passed: bool
    kink_flagged: tuple
    worst_entry: tuple | int | None

    def to_json_dict(self) -> dict:
        return {
            "max_rel_err": self.max_rel_err,
            "pass": self.passed,
            "kink_flagged": [
                list(ix) if isinstance(ix, tuple) else ix for ix in self.kink_flagged
            ],
            "worst_entry": (
                list(self.worst_entry)
                if isinstance(self.worst_entry, tuple)
                else self.worst_entry
            ),
        }


@dataclass(frozen=True)
class GradCheckReport:
    """Per-parameter comparison verdicts plus the run configuration."""

    checks: dict[str, ParamCheck]
    step: float
    tolerance: float
    resolution: float
    passed: bool

    def to_json_dict(self, seed: int | None = None) -> dict:
        out: dict = {key: check.to_json_dict() for key, check in self.checks.items()}
        out["step"] = self.step
        out["tolerance"] = self.tolerance
        out["resolution"] = self.resolution
        out["seed"] = seed
        out["pass"] = self.passed
        return out


def _indices(mask: np.ndarray) -> tuple:
    if mask.ndim == 1:
        return tuple(int(i) for i in np.flatnonzero(mask))
    return tuple(tuple(int(v) for v in ix) for ix in np.argwhere(mask))


def compare_gradients(
    analytic: GradientSet,
    numeric: FdGradient | GradientSet,
    config: FdConfig = FdConfig(),
    keys: tuple[str, ...] = PARAM_KEYS,
) -> GradCheckReport:
    """Compare analytic gradients against the oracle, parameter by parameter.

    An entry passes when its relative error is within the tolerance, or when
    both the analytic value and the disagreement sit below the oracle
    resolution: the loss is then constant along that coordinate to within
    rounding, and the quotient is pure noise with no information to judge.
    Kink-flagged entries are excluded from the verdict and listed.
    """
    if isinstance(numeric, FdGradient):
        numeric_sets = numeric.grads.as_dict()
        flags = numeric.kink_flags
        resolution = numeric.resolution
    else:
        numeric_sets = numeric.as_dict()
        flags = {}
        resolution = 0.0
    analytic_sets = analytic.as_dict()
    checks: dict[str, ParamCheck] = {}
    all_passed = True
    for key in keys:
        x, y = analytic_sets[key], numeric_sets[key]
        if x.shape != y.shape:
            raise ValueError(f"{key}: analytic shape {x.shape} != numeric {y.shape}")
        flag = flags.get(key, np.zeros(x.shape, dtype=bool))
        rel = relative_error(x, y)
        diff = np.abs(x - y)
        below_res = (np.abs(x) <= resolution) & (diff <= resolution)
        passed = bool(np.all((rel <= config.tolerance) | below_res | flag))
        judged = ~flag & ~below_res
        if judged.any():
            masked = np.where(judged, rel, -1.0)
            worst_flat = int(np.argmax(masked))
            worst = (
                worst_flat
                if x.ndim == 1
                else tuple(int(v) for v in np.unravel_index(worst_flat, x.shape))
            )
            max_rel = float(masked.reshape(-1)[worst_flat])
        else:
            worst, max_rel = None, 0.0
        checks[key] = ParamCheck(
            max_rel_err=max_rel,
            passed=passed,
            kink_flagged=_indices(flag),
            worst_entry=worst,
        )
        all_passed &= passed
    return GradCheckReport(
        checks=checks,
        step=config.step,
        tolerance=config.tolerance,
        resolution=resolution,
        passed=all_passed,
    )
