"""Segmentation losses over (probability map, binary mask) pairs.

Every loss here is an instance of one normalized template: a voxelwise
volumetric term theta(s_v, g_v) multiplied by a geometric term psi(s, g, v)
built from a spatial operator, summed over the volume and divided by a
normalizer gamma. ``geo_eval`` evaluates that template generically for any
valid selector combination; the dedicated functions (``dice_loss``,
``bce_loss``, ``bd_loss``, ``hd_loss``, ``fog_loss``, ``sog_loss``) are
independent closed-form implementations of the named instantiations.

All losses return the scalar value together with the exact analytic gradient
with respect to every probability value. Distance maps computed from the
prediction are treated as constants under differentiation (recomputed per
evaluation, never differentiated through), and |.| uses the zero subgradient
at 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .transforms import (
    Boundary,
    DistanceMap,
    GeometricOperator,
    OpKind,
    Stencil,
    edt,
    fog,
    fog_adjoint,
    sog,
)
from .volume import (
    BinaryMask,
    GridSpec,
    ProbabilityMap,
    ScalarField,
    VoxelIndex,
    binarize,
    require_same_grid,
)

__all__ = [
    "BCE_LOG_EPS",
    "PLANE_AXES",
    "Theta",
    "Psi",
    "Gamma",
    "GeoLossSpec",
    "LossResult",
    "LossTerm",
    "CompositeLoss",
    "NonFiniteLossError",
    "geo_eval",
    "dice_loss",
    "bce_loss",
    "bd_loss",
    "hd_loss",
    "fog_loss",
    "sog_loss",
    "composite_eval",
    "prediction_distance_map",
    "grad_check",
    "GradCheckReport",
    "dice_spec",
    "bce_spec",
    "bd_spec",
    "hd_spec",
    "fog_spec",
    "sog_spec",
    "spec_from_json",
    "spec_to_json",
    "composite_from_json",
    "composite_to_json",
]

BCE_LOG_EPS = 1e-7

# Anatomical plane -> array axis, assuming RAS-ordered volumes:
# sagittal boundaries vary along x, coronal along y, axial along z.
PLANE_AXES = {"s": 0, "c": 1, "a": 2}
_AXIS_LETTER = {0: "x", 1: "y", 2: "z"}


class Theta(Enum):
    """Voxelwise volumetric term."""

    BCE = "bce"            # -(g log s + (1-g) log(1-s)), log-clamped
    DICE_NUM = "dice-num"  # s + g - 2 s g
    S_ONLY = "s"           # s
    SQ_DIFF = "sq-diff"    # (s - g)^2
    ABS_DIFF = "abs-diff"  # |s - g|
    ONE = "one"            # 1


class Psi(Enum):
    """Voxelwise geometric term."""

    ONE = "one"
    DTM_G = "dtm-g"                  # distance map of g
    DTM_SQ_SUM = "dtm-sq-sum"        # dtm(g)^2 + dtm(binarized s)^2, both unsigned
    FOG_SQ_DIFF = "fog-sq-diff"      # || d(s) - d(g) ||^2 over the selected axes
    SOG_G = "sog-g"                  # laplacian of g
    SOG_G_PLUS_S = "sog-g-plus-s"    # laplacian of g + laplacian of s


class Gamma(Enum):
    """Normalizer."""

    UNIT_SUM = "one"          # divide by 1 (pure sum)
    DICE_DEN = "dice-den"     # divide by sum(s + g)
    CARD_OMEGA = "n-voxels"   # divide by the voxel count


# (theta, psi) -> (allowed gammas, allowed operator kinds or None if no operator)
_VALID_COMBOS = {
    (Theta.BCE, Psi.ONE): ({Gamma.UNIT_SUM, Gamma.CARD_OMEGA}, None),
    (Theta.DICE_NUM, Psi.ONE): ({Gamma.DICE_DEN}, None),
    (Theta.S_ONLY, Psi.DTM_G): (
        {Gamma.CARD_OMEGA, Gamma.UNIT_SUM},
        {OpKind.DTM_SIGNED, OpKind.DTM_UNSIGNED},
    ),
    (Theta.SQ_DIFF, Psi.DTM_SQ_SUM): (
        {Gamma.CARD_OMEGA, Gamma.UNIT_SUM},
        {OpKind.DTM_UNSIGNED},
    ),
    (Theta.ONE, Psi.FOG_SQ_DIFF): (
        {Gamma.CARD_OMEGA},
        {OpKind.FOG_FULL, OpKind.FOG_X, OpKind.FOG_Y, OpKind.FOG_Z},
    ),
    (Theta.ABS_DIFF, Psi.SOG_G): ({Gamma.CARD_OMEGA}, {OpKind.SOG}),
    (Theta.ABS_DIFF, Psi.SOG_G_PLUS_S): ({Gamma.CARD_OMEGA}, {OpKind.SOG}),
}


@dataclass(frozen=True)
class GeoLossSpec:
    """A (theta, psi, gamma, operator) selection; only the named combinations
    are constructible. Use the *_spec helpers rather than spelling these out.
    """

    theta: Theta
    psi: Psi
    gamma: Gamma
    operator: GeometricOperator | None = None
    magnitude: bool = False  # SOG only: use |psi| instead of psi

    def __post_init__(self):
        key = (self.theta, self.psi)
        if key not in _VALID_COMBOS:
            raise ValueError(f"invalid loss combination theta={self.theta}, psi={self.psi}")
        gammas, op_kinds = _VALID_COMBOS[key]
        if self.gamma not in gammas:
            raise ValueError(
                f"gamma {self.gamma} not valid for theta={self.theta}, psi={self.psi}"
            )
        if op_kinds is None:
            if self.operator is not None:
                raise ValueError(f"loss ({self.theta}, {self.psi}) takes no operator")
        else:
            if self.operator is None or self.operator.kind not in op_kinds:
                raise ValueError(
                    f"loss ({self.theta}, {self.psi}) needs an operator of kind {op_kinds}"
                )
        if self.magnitude and self.psi not in (Psi.SOG_G, Psi.SOG_G_PLUS_S):
            raise ValueError("magnitude flag applies only to the SOG losses")

    @property
    def name(self) -> str:
        if self.theta is Theta.DICE_NUM:
            return "dice"
        if self.theta is Theta.BCE:
            return "bce" if self.gamma is Gamma.UNIT_SUM else "bce_mean"
        if self.psi is Psi.DTM_G:
            return "bd"
        if self.psi is Psi.DTM_SQ_SUM:
            return "hd"
        if self.psi is Psi.FOG_SQ_DIFF:
            axes = self.operator.axes
            if axes == (0, 1, 2):
                return "fog_full"
            return "fog_" + "".join(_AXIS_LETTER[a] for a in axes)
        sided = "one" if self.psi is Psi.SOG_G else "two"
        return f"sog_{sided}" + ("_mag" if self.magnitude else "")


def dice_spec() -> GeoLossSpec:
    return GeoLossSpec(Theta.DICE_NUM, Psi.ONE, Gamma.DICE_DEN)


def bce_spec(mean: bool = False) -> GeoLossSpec:
    return GeoLossSpec(Theta.BCE, Psi.ONE, Gamma.CARD_OMEGA if mean else Gamma.UNIT_SUM)


def bd_spec(signed: bool = True, normalize: bool = True) -> GeoLossSpec:
    kind = OpKind.DTM_SIGNED if signed else OpKind.DTM_UNSIGNED
    return GeoLossSpec(
        Theta.S_ONLY,
        Psi.DTM_G,
        Gamma.CARD_OMEGA if normalize else Gamma.UNIT_SUM,
        GeometricOperator(kind),
    )


def hd_spec(normalize: bool = True) -> GeoLossSpec:
    return GeoLossSpec(
        Theta.SQ_DIFF,
        Psi.DTM_SQ_SUM,
        Gamma.CARD_OMEGA if normalize else Gamma.UNIT_SUM,
        GeometricOperator(OpKind.DTM_UNSIGNED),
    )


_AXIS_FOG_KIND = {0: OpKind.FOG_X, 1: OpKind.FOG_Y, 2: OpKind.FOG_Z}
_FOG_VARIANT_KIND = {
    "full": OpKind.FOG_FULL,
    **{plane: _AXIS_FOG_KIND[a] for plane, a in PLANE_AXES.items()},
    **{letter: _AXIS_FOG_KIND[a] for a, letter in _AXIS_LETTER.items()},
}


def fog_spec(
    variant: str = "full",
    stencil: Stencil = Stencil.CENTRAL,
    boundary: Boundary = Boundary.REPLICATE,
) -> GeoLossSpec:
    """First-order gradient loss spec; variant selects all axes or a single
    plane (s/c/a map to the x/y/z derivative per PLANE_AXES)."""
    key = str(variant).lower()
    if key not in _FOG_VARIANT_KIND:
        raise ValueError(f"unknown fog variant {variant!r}")
    op = GeometricOperator(_FOG_VARIANT_KIND[key], stencil, boundary)
    return GeoLossSpec(Theta.ONE, Psi.FOG_SQ_DIFF, Gamma.CARD_OMEGA, op)


def sog_spec(
    sided: str = "one",
    magnitude: bool = False,
    boundary: Boundary = Boundary.REPLICATE,
) -> GeoLossSpec:
    psi = {"one": Psi.SOG_G, "two": Psi.SOG_G_PLUS_S}.get(str(sided).lower())
    if psi is None:
        raise ValueError(f"sided must be 'one' or 'two', got {sided!r}")
    op = GeometricOperator(OpKind.SOG, boundary=boundary)
    return GeoLossSpec(Theta.ABS_DIFF, psi, Gamma.CARD_OMEGA, op, magnitude=magnitude)


@dataclass(frozen=True)
class LossResult:
    """Scalar loss value plus its gradient with respect to every s_v."""

    value: float
    grad: ScalarField
    terms: dict[str, float] | None = None


class NonFiniteLossError(ArithmeticError):
    def __init__(self, message: str, term: str | None = None, worst_voxel=None):
        super().__init__(message)
        self.term = term
        self.worst_voxel = worst_voxel


@dataclass(frozen=True)
class LossTerm:
    """One weighted term of a composite; weight_end turns the constant weight
    into a linear ramp weight -> weight_end over training progress in [0, 1]."""

    spec: GeoLossSpec
    weight: float = 1.0
    weight_end: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.weight):
            raise ValueError("term weight must be finite")
        if self.weight_end is not None and not math.isfinite(self.weight_end):
            raise ValueError("term weight_end must be finite")

    def weight_at(self, progress: float) -> float:
        if self.weight_end is None:
            return self.weight
        return self.weight + (self.weight_end - self.weight) * progress


@dataclass(frozen=True)
class CompositeLoss:
    terms: tuple[LossTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("composite loss needs at least one term")
        object.__setattr__(self, "terms", terms)

    def term_names(self) -> list[str]:
        names: list[str] = []
        for t in self.terms:
            base = t.spec.name
            name, k = base, 2
            while name in names:
                name, k = f"{base}{k}", k + 1
            names.append(name)
        return names


# Sentinel: "compute the prediction's distance map internally".
_AUTO = object()


def prediction_distance_map(s: ProbabilityMap, threshold: float = 0.5) -> DistanceMap | None:
    """Unsigned distance map of the thresholded prediction.

    Returns None (with a warning) when the binarized map has no boundary,
    i.e. is all-background or all-foreground; callers drop the term.
    """
    b = binarize(s, threshold)
    n_fg = b.foreground_count
    if n_fg == 0 or n_fg == b.grid.voxel_count:
        warnings.warn(
            "binarized prediction has no boundary; its distance-map term is dropped",
            RuntimeWarning,
            stacklevel=2,
        )
        return None
    return edt(b, signed=False)


def _sign(x: np.ndarray) -> np.ndarray:
    return np.sign(x)  # sign(0) == 0: zero subgradient at the |.| kink


def _clipped(s: np.ndarray) -> np.ndarray:
    return np.clip(s, BCE_LOG_EPS, 1.0 - BCE_LOG_EPS)


def _theta_fields(theta: Theta, sv: np.ndarray, gv: np.ndarray):
    """Per-voxel theta values and d(theta)/ds; (None, None) encodes theta == 1."""
    if theta is Theta.ONE:
        return None, None
    if theta is Theta.BCE:
        sc = _clipped(sv)
        val = -(gv * np.log(sc) + (1.0 - gv) * np.log1p(-sc))
        return val, (sc - gv) / (sc * (1.0 - sc))
    if theta is Theta.DICE_NUM:
        return sv + gv - 2.0 * sv * gv, 1.0 - 2.0 * gv
    if theta is Theta.S_ONLY:
        return sv.copy(), np.ones_like(sv)
    if theta is Theta.SQ_DIFF:
        d = sv - gv
        return d * d, 2.0 * d
    if theta is Theta.ABS_DIFF:
        d = sv - gv
        return np.abs(d), _sign(d)
    raise ValueError(f"unknown theta {theta}")


def geo_eval(
    spec: GeoLossSpec,
    s: ProbabilityMap,
    g: BinaryMask,
    *,
    pred_dtm=_AUTO,
) -> LossResult:
    """Evaluate the generic loss template for any valid spec.

    value = sum_v theta_v * psi_v / denominator, with the exact analytic
    gradient assembled from d(theta)/ds, psi's dependence on s through the
    linear operators, and the normalizer's own s-dependence (Dice).

    ``pred_dtm`` freezes the prediction's distance map (HD spec only): pass a
    DistanceMap to reuse one, or None to drop that term; by default it is
    recomputed from the thresholded prediction.
    """
    grid = require_same_grid(s, g)
    sv, gv = s.data, g.data
    n = grid.voxel_count

    theta, dtheta = _theta_fields(spec.theta, sv, gv)
    psi = None  # None encodes psi == 1
    extra_grad = None  # d(sum theta*psi)/ds routed through psi's s-dependence

    if spec.psi is Psi.DTM_G:
        signed = spec.operator.kind is OpKind.DTM_SIGNED
        psi = edt(g, signed=signed).data
    elif spec.psi is Psi.DTM_SQ_SUM:
        dg = edt(g, signed=False).data
        ds = prediction_distance_map(s) if pred_dtm is _AUTO else pred_dtm
        psi = dg * dg
        if ds is not None:
            psi = psi + ds.data * ds.data
        # both maps are constants under differentiation
    elif spec.psi is Psi.FOG_SQ_DIFF:
        diff = fog(s, op=spec.operator) - fog(g, op=spec.operator)
        psi = np.zeros_like(sv)
        for a in diff.axes:
            psi += diff.components[a].data ** 2
        extra_grad = 2.0 * fog_adjoint(diff, spec.operator).data
    elif spec.psi is Psi.SOG_G:
        w = sog(g, spec.operator).data
        psi = np.abs(w) if spec.magnitude else w
    elif spec.psi is Psi.SOG_G_PLUS_S:
        w = sog(g, spec.operator).data + sog(s, spec.operator).data
        if spec.magnitude:
            psi = np.abs(w)
            inner = theta * _sign(w)
        else:
            psi = w
            inner = theta
        # laplacian is self-adjoint, so the transpose is the operator itself
        extra_grad = sog(ScalarField(grid, inner), spec.operator).data

    if spec.gamma is Gamma.UNIT_SUM:
        denom = 1.0
    elif spec.gamma is Gamma.CARD_OMEGA:
        denom = float(n)
    else:  # DICE_DEN
        denom = float(np.sum(sv + gv))
        if denom == 0.0:
            # both maps empty: perfect-agreement convention
            return LossResult(0.0, ScalarField(grid, np.zeros_like(sv)))

    if theta is None:
        prod = psi if psi is not None else np.ones_like(sv)
    elif psi is None:
        prod = theta
    else:
        prod = theta * psi
    num = float(np.sum(prod))
    value = num / denom

    grad = np.zeros_like(sv)
    if dtheta is not None:
        grad += dtheta if psi is None else dtheta * psi
    if extra_grad is not None:
        grad += extra_grad
    grad /= denom
    if spec.gamma is Gamma.DICE_DEN:
        grad -= num / denom**2

    if not (math.isfinite(value) and np.isfinite(grad).all()):
        worst = _worst_voxel(grid, grad)
        raise NonFiniteLossError(
            f"non-finite loss value/gradient for {spec.name}", spec.name, worst
        )
    return LossResult(value, ScalarField(grid, grad))


def _worst_voxel(grid: GridSpec, arr: np.ndarray):
    bad = ~np.isfinite(arr)
    flat = int(np.argmax(bad.ravel(order="F"))) if bad.any() else int(
        np.argmax(np.abs(arr).ravel(order="F"))
    )
    return grid.voxel_from_linear(flat)


def dice_loss(s: ProbabilityMap, g: BinaryMask) -> LossResult:
    """Soft Dice loss 1 - 2 sum(s g) / sum(s + g); 0 when both maps are empty."""
    grid = require_same_grid(s, g)
    sv, gv = s.data, g.data
    denom = float(np.sum(sv + gv))
    if denom == 0.0:
        return LossResult(0.0, ScalarField(grid, np.zeros_like(sv)))
    inter = float(np.sum(sv * gv))
    value = 1.0 - 2.0 * inter / denom
    grad = 2.0 * (inter - gv * denom) / denom**2
    return LossResult(value, ScalarField(grid, grad))


def bce_loss(s: ProbabilityMap, g: BinaryMask, mean: bool = False) -> LossResult:
    """Binary cross entropy, summed over voxels (mean optional), log-clamped."""
    grid = require_same_grid(s, g)
    sc = _clipped(s.data)
    gv = g.data
    per = -(gv * np.log(sc) + (1.0 - gv) * np.log1p(-sc))
    grad = (sc - gv) / (sc * (1.0 - sc))
    scale = grid.voxel_count if mean else 1.0
    return LossResult(float(np.sum(per)) / scale, ScalarField(grid, grad / scale))


def bd_loss(
    s: ProbabilityMap, g: BinaryMask, dtm: DistanceMap, normalize: bool = True
) -> LossResult:
    """Boundary loss: prediction values weighted by g's distance map.

    The gradient is the (normalized) distance map itself; the loss is linear
    in s. Pass a signed map for the conventional form where a perfect
    prediction scores negative; ``normalize`` divides by the voxel count.
    """
    grid = require_same_grid(s, g)
    require_same_grid(dtm, g)
    scale = grid.voxel_count if normalize else 1.0
    value = float(np.sum(s.data * dtm.data)) / scale
    return LossResult(value, ScalarField(grid, dtm.data / scale))


def hd_loss(
    s: ProbabilityMap,
    g: BinaryMask,
    dtm_g: DistanceMap,
    dtm_s: DistanceMap | None,
    normalize: bool = True,
) -> LossResult:
    """Squared error weighted by the squared distance maps of both volumes.

    Both maps must be unsigned; dtm_s comes from the thresholded prediction
    (see prediction_distance_map) and may be None when that map is degenerate,
    in which case its term is dropped. Both maps are constants under
    differentiation.
    """
    grid = require_same_grid(s, g)
    w = dtm_g.data**2
    if dtm_s is not None:
        w = w + dtm_s.data**2
    diff = s.data - g.data
    scale = grid.voxel_count if normalize else 1.0
    value = float(np.sum(diff * diff * w)) / scale
    return LossResult(value, ScalarField(grid, 2.0 * diff * w / scale))


def _fog_axes(variant) -> tuple[int, ...]:
    if isinstance(variant, (tuple, list)):
        return tuple(int(a) for a in variant)
    key = str(variant).lower()
    if key == "full":
        return (0, 1, 2)
    if key in PLANE_AXES:
        return (PLANE_AXES[key],)
    if key in ("x", "y", "z"):
        return ("xyz".index(key),)
    raise ValueError(f"unknown fog variant {variant!r}")


def fog_loss(
    s: ProbabilityMap,
    g: BinaryMask,
    variant="full",
    op: GeometricOperator | None = None,
) -> LossResult:
    """Mean squared difference of the first-order gradients of s and g.

    variant 'full' uses all three axes; 's'/'c'/'a' (or 'x'/'y'/'z', or an
    explicit axis tuple) use single-axis derivatives. The full value is
    accumulated axis by axis so it equals the sum of the single-axis values
    bit for bit.
    """
    grid = require_same_grid(s, g)
    axes = _fog_axes(variant)
    if op is None:
        op = GeometricOperator(OpKind.FOG_FULL)
    n = grid.voxel_count
    diff = fog(s, axes, op) - fog(g, axes, op)
    value = 0.0
    for a in diff.axes:
        value += float(np.sum(diff.components[a].data ** 2)) / n
    grad = 2.0 / n * fog_adjoint(diff, op).data
    return LossResult(value, ScalarField(grid, grad))


def sog_loss(
    s: ProbabilityMap,
    g: BinaryMask,
    sided: str = "one",
    magnitude: bool = False,
    op: GeometricOperator | None = None,
) -> LossResult:
    """|s - g| weighted by the discrete laplacian of g (one-sided) or of both
    g and s (two-sided); mean over voxels.

    Following the defining equation the weight keeps its sign, so the value
    can be negative; set ``magnitude`` to weight by |laplacian| instead.
    """
    grid = require_same_grid(s, g)
    if op is None:
        op = GeometricOperator(OpKind.SOG)
    n = grid.voxel_count
    absdiff = np.abs(s.data - g.data)
    sgn = _sign(s.data - g.data)
    w = sog(g, op).data
    two_sided = str(sided).lower() == "two"
    if two_sided:
        w = w + sog(s, op).data
    elif str(sided).lower() != "one":
        raise ValueError(f"sided must be 'one' or 'two', got {sided!r}")
    psi = np.abs(w) if magnitude else w
    value = float(np.sum(absdiff * psi)) / n
    grad = sgn * psi
    if two_sided:
        inner = absdiff * _sign(w) if magnitude else absdiff
        grad = grad + sog(ScalarField(grid, inner), op).data
    return LossResult(value, ScalarField(grid, grad / n))


def composite_eval(
    c: CompositeLoss,
    s: ProbabilityMap,
    g: BinaryMask,
    progress: float = 0.0,
    *,
    pred_dtms: dict[int, DistanceMap | None] | None = None,
) -> LossResult:
    """Weighted sum of the terms at the given training progress in [0, 1].

    The ``terms`` dict on the result holds the raw (unweighted) term values.
    ``pred_dtms`` optionally freezes the prediction distance map per term
    index (HD terms), as in geo_eval.
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    grid = require_same_grid(s, g)
    total = 0.0
    grad = np.zeros(grid.dims, dtype=np.float64)
    names = c.term_names()
    term_values: dict[str, float] = {}
    for i, (term, name) in enumerate(zip(c.terms, names)):
        dtm = pred_dtms.get(i, _AUTO) if pred_dtms is not None else _AUTO
        res = geo_eval(term.spec, s, g, pred_dtm=dtm)
        term_values[name] = res.value
        w = term.weight_at(progress)
        with np.errstate(over="ignore", invalid="ignore"):
            total += w * res.value
            grad += w * res.grad.data
        if not (math.isfinite(total) and np.isfinite(grad).all()):
            raise NonFiniteLossError(
                f"non-finite composite loss after term {name!r}",
                name,
                _worst_voxel(grid, grad),
            )
    return LossResult(total, ScalarField(grid, grad), terms=term_values)


@dataclass(frozen=True)
class GradCheckReport:
    max_abs_err: float
    max_rel_err: float
    worst_voxel: VoxelIndex
    n_checked: int

    def to_dict(self) -> dict:
        return {
            "max_abs_err": self.max_abs_err,
            "max_rel_err": self.max_rel_err,
            "worst_voxel": list(self.worst_voxel),
            "n_checked": self.n_checked,
        }


def _freeze_target(target, s: ProbabilityMap, g: BinaryMask, progress: float):
    """Build (value_at(data), base LossResult) with stop-gradient quantities
    held fixed at the base point across finite-difference evaluations."""
    grid = s.grid
    if isinstance(target, GeoLossSpec):
        frozen = prediction_distance_map(s) if target.psi is Psi.DTM_SQ_SUM else _AUTO

        def value_at(data):
            return geo_eval(target, ProbabilityMap(grid, data), g, pred_dtm=frozen).value

        base = geo_eval(target, s, g, pred_dtm=frozen)
    elif isinstance(target, CompositeLoss):
        frozen_map = {
            i: prediction_distance_map(s)
            for i, t in enumerate(target.terms)
            if t.spec.psi is Psi.DTM_SQ_SUM
        }

        def value_at(data):
            return composite_eval(
                target, ProbabilityMap(grid, data), g, progress, pred_dtms=frozen_map
            ).value

        base = composite_eval(target, s, g, progress, pred_dtms=frozen_map)
    elif callable(target):
        def value_at(data):
            return target(ProbabilityMap(grid, data), g).value

        base = target(s, g)
    else:
        raise TypeError(f"cannot gradient-check a {type(target).__name__}")
    return value_at, base


def grad_check(
    target,
    s: ProbabilityMap,
    g: BinaryMask,
    eps: float = 1e-5,
    *,
    progress: float = 0.0,
    max_voxels: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare the analytic gradient against central finite differences.

    ``target`` is a GeoLossSpec, a CompositeLoss, or any callable
    (s, g) -> LossResult. Every probability must lie strictly inside
    (eps, 1 - eps) so perturbed maps stay valid. For large grids pass
    ``max_voxels`` to check a seeded random subset.

    The per-voxel relative error is |fd - analytic| / max(|fd|, |analytic|,
    0.001 * the largest gradient magnitude), which keeps finite-difference
    rounding noise on near-zero entries from registering as error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if s.data.min() <= eps or s.data.max() >= 1.0 - eps:
        raise ValueError(f"probabilities must lie strictly inside ({eps}, {1 - eps})")
    grid = require_same_grid(s, g)
    value_at, base = _freeze_target(target, s, g, progress)
    analytic = base.grad.data

    n = grid.voxel_count
    if max_voxels is not None and max_voxels < n:
        rng = np.random.default_rng(seed)
        flat_indices = np.sort(rng.choice(n, size=max_voxels, replace=False))
    else:
        flat_indices = np.arange(n)

    fd = np.zeros(flat_indices.size)
    an = np.zeros(flat_indices.size)
    voxels = []
    work = s.data.copy()
    for k, flat in enumerate(flat_indices):
        v = grid.voxel_from_linear(int(flat))
        voxels.append(v)
        orig = work[v]
        work[v] = orig + eps
        up = value_at(work)
        work[v] = orig - eps
        down = value_at(work)
        work[v] = orig
        fd[k] = (up - down) / (2.0 * eps)
        an[k] = analytic[v]

    abs_err = np.abs(fd - an)
    scale = max(np.abs(an).max(), np.abs(fd).max()) if fd.size else 0.0
    if scale < 1e-12:
        rel_err = np.zeros_like(abs_err)
    else:
        denom = np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-3 * scale)
        rel_err = abs_err / denom
    worst = int(np.argmax(rel_err)) if rel_err.size else 0
    return GradCheckReport(
        max_abs_err=float(abs_err.max()) if abs_err.size else 0.0,
        max_rel_err=float(rel_err.max()) if rel_err.size else 0.0,
        worst_voxel=voxels[worst] if voxels else (0, 0, 0),
        n_checked=int(flat_indices.size),
    )


# ---------------------------------------------------------------------------
# JSON loss-spec documents: {"name": ..., parameters...}; composites are
# {"terms": [{"spec": {...}, "weight": 1.0 | {"ramp": [w0, w1]}}, ...]}.

def spec_from_json(obj: dict) -> GeoLossSpec:
    if not isinstance(obj, dict) or "name" not in obj:
        raise ValueError("loss spec JSON must be an object with a 'name' field")
    name = obj["name"]
    if name == "dice":
        return dice_spec()
    if name == "bce":
        return bce_spec(mean=obj.get("reduction", "sum") == "mean")
    if name == "bd":
        return bd_spec(signed=obj.get("signed", True), normalize=obj.get("normalize", True))
    if name == "hd":
        return hd_spec(normalize=obj.get("normalize", True))
    if name == "fog":
        return fog_spec(
            variant=obj.get("variant", "full"),
            stencil=Stencil(obj.get("stencil", "central")),
            boundary=Boundary(obj.get("boundary", "replicate")),
        )
    if name == "sog":
        return sog_spec(
            sided=obj.get("sided", "one"),
            magnitude=bool(obj.get("magnitude", False)),
            boundary=Boundary(obj.get("boundary", "replicate")),
        )
    raise ValueError(f"unknown loss name {name!r}")


def spec_to_json(spec: GeoLossSpec) -> dict:
    if spec.theta is Theta.DICE_NUM:
        return {"name": "dice"}
    if spec.theta is Theta.BCE:
        return {"name": "bce", "reduction": "mean" if spec.gamma is Gamma.CARD_OMEGA else "sum"}
    if spec.psi is Psi.DTM_G:
        return {
            "name": "bd",
            "signed": spec.operator.kind is OpKind.DTM_SIGNED,
            "normalize": spec.gamma is Gamma.CARD_OMEGA,
        }
    if spec.psi is Psi.DTM_SQ_SUM:
        return {"name": "hd", "normalize": spec.gamma is Gamma.CARD_OMEGA}
    if spec.psi is Psi.FOG_SQ_DIFF:
        axes = spec.operator.axes
        variant = "full" if axes == (0, 1, 2) else _AXIS_LETTER[axes[0]]
        return {
            "name": "fog",
            "variant": variant,
            "stencil": spec.operator.stencil.value,
            "boundary": spec.operator.boundary.value,
        }
    return {
        "name": "sog",
        "sided": "one" if spec.psi is Psi.SOG_G else "two",
        "magnitude": spec.magnitude,
        "boundary": spec.operator.boundary.value,
    }


def composite_from_json(obj: dict) -> CompositeLoss:
    """Parse a composite document; a bare named spec becomes a single
    unit-weight term."""
    if isinstance(obj, dict) and "name" in obj and "terms" not in obj:
        return CompositeLoss((LossTerm(spec_from_json(obj)),))
    if not isinstance(obj, dict) or "terms" not in obj:
        raise ValueError("composite JSON needs a 'terms' list or a bare named spec")
    terms = []
    for t in obj["terms"]:
        spec = spec_from_json(t["spec"])
        w = t.get("weight", 1.0)
        if isinstance(w, dict):
            ramp = w.get("ramp")
            if not (isinstance(ramp, (list, tuple)) and len(ramp) == 2):
                raise ValueError(f"weight object must be {{'ramp': [w0, w1]}}, got {w!r}")
            terms.append(LossTerm(spec, float(ramp[0]), float(ramp[1])))
        else:
            terms.append(LossTerm(spec, float(w)))
    return CompositeLoss(tuple(terms))


def composite_to_json(c: CompositeLoss) -> dict:
    terms = []
    for t in c.terms:
        w = t.weight if t.weight_end is None else {"ramp": [t.weight, t.weight_end]}
        terms.append({"spec": spec_to_json(t.spec), "weight": w})
    return {"terms": terms}
