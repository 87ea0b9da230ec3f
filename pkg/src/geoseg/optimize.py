"""Direct optimization of a probability map against a ground-truth mask.

A desk-scale stand-in for network training: the optimization variable is an
unconstrained logit field theta with s = sigmoid(theta), so probabilities stay
in (0, 1) without projection. Each step evaluates the composite loss at
progress = step / steps, backpropagates through the sigmoid analytically
(dL/dtheta = dL/ds * s * (1 - s)), and applies either plain gradient descent
or Adam (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with a milestone-scaled
learning rate.

Note the default learning rate (0.1) targets logit fields, whose conditioning
differs from network weights; the milestone schedule shape (halve at 50%, 70%,
90% of progress) is the conventional one.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .losses import CompositeLoss, NonFiniteLossError, composite_eval
from .metrics import dsc
from .volume import BinaryMask, ProbabilityMap, binarize

__all__ = [
    "DEFAULT_MILESTONES",
    "InitSpec",
    "OptimConfig",
    "TrajectoryPoint",
    "Trajectory",
    "OptimizationError",
    "lr_at",
    "optimize_map",
    "trajectory_csv",
    "config_from_json",
    "config_to_json",
]

DEFAULT_MILESTONES = ((0.5, 0.5), (0.7, 0.5), (0.9, 0.5))

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class InitSpec:
    """Logit initialization: all-zero (s = 0.5 everywhere) or seeded Gaussian."""

    kind: str = "zero"  # "zero" | "noise"
    seed: int = 0
    std: float = 0.1

    def __post_init__(self):
        if self.kind not in ("zero", "noise"):
            raise ValueError(f"init kind must be 'zero' or 'noise', got {self.kind!r}")
        if self.std < 0:
            raise ValueError("init std must be >= 0")


@dataclass(frozen=True)
class OptimConfig:
    loss: CompositeLoss
    steps: int = 500
    base_lr: float = 0.1
    optimizer: str = "adam"  # "adam" | "gd"
    lr_milestones: tuple[tuple[float, float], ...] = DEFAULT_MILESTONES
    init: InitSpec = field(default_factory=InitSpec)
    record_every: int = 10
    threshold: float = 0.5  # for the recorded overlap score

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if self.optimizer not in ("adam", "gd"):
            raise ValueError(f"optimizer must be 'adam' or 'gd', got {self.optimizer!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        ms = tuple((float(f), float(m)) for f, m in self.lr_milestones)
        fracs = [f for f, _ in ms]
        if any(not 0.0 < f <= 1.0 for f in fracs):
            raise ValueError("milestone fractions must lie in (0, 1]")
        if fracs != sorted(fracs):
            raise ValueError("milestones must be sorted by fraction")
        object.__setattr__(self, "lr_milestones", ms)


def lr_at(progress: float, base_lr: float, milestones=DEFAULT_MILESTONES) -> float:
    """Learning rate at a progress fraction: base times every multiplier whose
    milestone fraction has been reached (inclusive)."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    lr = base_lr
    for frac, mult in milestones:
        if frac <= progress:
            lr *= mult
    return lr


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    loss: float
    terms: dict[str, float]
    dsc: float
    grad_norm: float


@dataclass(frozen=True)
class Trajectory:
    points: tuple[TrajectoryPoint, ...]
    final_map: ProbabilityMap
    term_names: tuple[str, ...]


class OptimizationError(RuntimeError):
    pass


def optimize_map(
    g: BinaryMask, cfg: OptimConfig, *, init_logits: np.ndarray | None = None
) -> Trajectory:
    """Run the configured optimization against the mask g.

    ``init_logits`` overrides the configured initialization with an explicit
    starting logit field (used e.g. to start from a perturbed map). Recorded
    points hold the pre-update loss, raw per-term values, overlap at the
    configured threshold, and the L2 norm of the logit gradient; recording
    happens every record_every steps and always at the last step.
    """
    grid = g.grid
    if init_logits is not None:
        theta = np.array(init_logits, dtype=np.float64, copy=True)
        if theta.shape != grid.dims:
            raise ValueError(f"init_logits shape {theta.shape} != grid dims {grid.dims}")
    elif cfg.init.kind == "zero":
        theta = np.zeros(grid.dims, dtype=np.float64)
    else:
        rng = np.random.default_rng(cfg.init.seed)
        theta = rng.standard_normal(grid.dims) * cfg.init.std

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    points: list[TrajectoryPoint] = []
    term_names = tuple(cfg.loss.term_names())

    for step in range(cfg.steps):
        progress = step / cfg.steps
        s_data = expit(theta)
        s = ProbabilityMap(grid, s_data)
        try:
            res = composite_eval(cfg.loss, s, g, progress)
        except NonFiniteLossError as exc:
            raise OptimizationError(
                f"non-finite loss at step {step} "
                f"(term {exc.term!r}, voxel {exc.worst_voxel})"
            ) from exc
        grad_theta = res.grad.data * s_data * (1.0 - s_data)
        lr = lr_at(progress, cfg.base_lr, cfg.lr_milestones)

        if step % cfg.record_every == 0 or step == cfg.steps - 1:
            points.append(
                TrajectoryPoint(
                    step=step,
                    loss=res.value,
                    terms=dict(res.terms),
                    dsc=dsc(binarize(s, cfg.threshold), g),
                    grad_norm=float(np.linalg.norm(grad_theta)),
                )
            )

        if cfg.optimizer == "gd":
            theta -= lr * grad_theta
        else:
            t = step + 1
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad_theta
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad_theta**2
            m_hat = m / (1.0 - ADAM_BETA1**t)
            v_hat = v / (1.0 - ADAM_BETA2**t)
            theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    final = ProbabilityMap(grid, expit(theta))
    return Trajectory(tuple(points), final, term_names)


def trajectory_csv(t: Trajectory) -> str:
    """CSV with header step,loss,term_<name>...,dsc,grad_norm."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["step", "loss", *(f"term_{n}" for n in t.term_names), "dsc", "grad_norm"])
    for p in t.points:
        writer.writerow(
            [p.step, p.loss, *(p.terms[n] for n in t.term_names), p.dsc, p.grad_norm]
        )
    return buf.getvalue()


def config_from_json(obj: dict) -> OptimConfig:
    from .losses import composite_from_json

    try:
        loss = composite_from_json(obj["loss"])
    except KeyError as exc:
        raise ValueError("optimizer config JSON needs a 'loss' field") from exc
    init_obj = obj.get("init", {"kind": "zero"})
    init = InitSpec(
        kind=init_obj.get("kind", "zero"),
        seed=int(init_obj.get("seed", 0)),
        std=float(init_obj.get("std", 0.1)),
    )
    milestones = obj.get("lr_milestones", DEFAULT_MILESTONES)
    return OptimConfig(
        loss=loss,
        steps=int(obj.get("steps", 500)),
        base_lr=float(obj.get("base_lr", 0.1)),
        optimizer=obj.get("optimizer", "adam"),
        lr_milestones=tuple((float(f), float(m)) for f, m in milestones),
        init=init,
        record_every=int(obj.get("record_every", 10)),
        threshold=float(obj.get("threshold", 0.5)),
    )


def config_to_json(cfg: OptimConfig) -> dict:
    from .losses import composite_to_json

    return {
        "loss": composite_to_json(cfg.loss),
        "steps": cfg.steps,
        "base_lr": cfg.base_lr,
        "optimizer": cfg.optimizer,
        "lr_milestones": [list(m) for m in cfg.lr_milestones],
        "init": {"kind": cfg.init.kind, "seed": cfg.init.seed, "std": cfg.init.std},
        "record_every": cfg.record_every,
        "threshold": cfg.threshold,
    }
