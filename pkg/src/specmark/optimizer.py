"""Metameric LED pair optimization.

Two intensity vectors ``x`` and ``y`` over an LED bank are tuned so that

* the human-visible colour of every patch barely changes between the two
  lights (mean CIEDE2000, ``loss_human``),
* each camera still sees a pixel difference in its weakest channel, clipped
  at ``tau_c`` (``loss_camera``),
* both lights render the patches close to the reference illuminant
  (hinge on per-patch CIEDE2000 at ``tau_w``, ``loss_white``).

Losses are evaluated on precomputed per-LED response tensors; rendering is
linear in the intensities, so ``responses(x) = x @ T``. The same loss code
runs on plain arrays (values, including batched grids of candidates) and on
:class:`~specmark.autodiff.Dual` numbers (exact gradients for Adam).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from specmark import autodiff as ad
from specmark.colorimetry import (
    ObserverSensitivity,
    Spectrum,
    check_grids,
    cri,
    delta_e_2000,
    integrate_to_tristimulus,
    lab_from_xyz,
)
from specmark.errors import DivergenceError
from specmark.scene import (
    DEFAULT_WHITE_LEVEL,
    CameraSet,
    IntensityVector,
    LedBank,
    ReflectanceSet,
    compose_illumination,
    exposure_gains,
    response_tensor,
)

logger = logging.getLogger(__name__)

EIGHT_BIT_FULL_SCALE = 255.0


@dataclass(frozen=True)
class LossWeights:
    w_h: float = 0.15
    w_c: float = 0.05
    w_w: float = 0.8

    def __post_init__(self):
        ws = (self.w_h, self.w_c, self.w_w)
        if any(w < 0 or not np.isfinite(w) for w in ws):
            raise ValueError("loss weights must be finite and non-negative")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class Thresholds:
    """Clip and hinge levels.

    ``tau_c`` is in normalized pixel units ([0, 1] full scale). The camera
    term enters the objective in ``camera_full_scale`` units (8-bit counts by
    default), which is what balances it against CIEDE2000 values.
    """

    tau_c: float = 1.0 / 256.0
    tau_w: float = 40.0 / 4.6
    camera_full_scale: float = EIGHT_BIT_FULL_SCALE

    def __post_init__(self):
        if not (self.tau_c > 0 and self.tau_w > 0 and self.camera_full_scale > 0):
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    iterations: int = 5000
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    init_noise: float = 0.01
    # intensities stay inside [bound_margin, 1 - bound_margin] at initialization
    bound_margin: float = 0.01
    # a candidate whose weakest-channel MAE is within this fraction of tau_c counts as on target
    mae_band: float = 0.05

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError("iterations must be a positive integer")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_epsilon > 0):
            raise ValueError("invalid Adam hyperparameters")


class OptimizationContext:
    """Everything the losses need, precomputed once.

    The reference illuminant is rescaled so that its non-negative
    least-squares fit on the bank peaks at ``fit_peak`` duty cycle; this sets
    the absolute light level shared by the lights and the Lab white point.
    """

    def __init__(
        self,
        bank: LedBank,
        patches: ReflectanceSet,
        cameras: CameraSet,
        human: ObserverSensitivity,
        reference: Spectrum,
        cri_samples: ReflectanceSet | None = None,
        fit_peak: float = 0.5,
        white_level: float = DEFAULT_WHITE_LEVEL,
    ):
        check_grids(bank.grid, patches.grid, human.grid, reference.grid, *(c.grid for c in cameras))
        if reference.is_zero:
            raise ValueError("reference illuminant is all zero")
        if not 0 < fit_peak <= 1:
            raise ValueError("fit_peak must lie in (0, 1]")
        self.bank = bank
        self.patches = patches
        self.cameras = cameras
        self.human = human
        self.cri_samples = cri_samples
        self.fit_peak = float(fit_peak)
        self.white_level = float(white_level)

        coef, _ = nnls(bank.profiles.T, reference.values)
        if coef.max() <= 0:
            raise ValueError("reference cannot be approximated by the LED bank")
        scale = fit_peak / coef.max()
        self.reference = reference.scaled(scale)
        self.reference_fit = coef * scale

        self.white_point = integrate_to_tristimulus(self.reference, human)
        self.reference_luminance = float(self.white_point[1])
        # luminance of each LED at full duty, so Y(x) = x @ led_luminance
        self.led_luminance = bank.profiles @ human.weights[:, 1]

        self.human_tensor = response_tensor(bank, patches, human)
        ref_xyz = patches.patches * self.reference.values @ human.weights
        self.reference_lab = lab_from_xyz(ref_xyz, self.white_point)

        white = patches.spectrum(patches.white_index)
        gains = np.array([exposure_gains(cam, self.reference, white, white_level) for cam in cameras])
        self.camera_gains = gains
        # (n_cam, n_led, n_patch, 3), already in normalized pixel units
        self.camera_tensor = np.stack(
            [response_tensor(bank, patches, cam) * g for cam, g in zip(cameras, gains)]
        )

        n_led, n_patch = bank.n_led, len(patches)
        self._human_flat = self.human_tensor.reshape(n_led, n_patch * 3)
        self._camera_flat = np.moveaxis(self.camera_tensor, 1, 0).reshape(n_led, -1)

    @property
    def n_led(self) -> int:
        return self.bank.n_led

    def human_xyz(self, x):
        """Patch XYZ under intensities ``x``: ``(..., n_patch, 3)``."""
        flat = ad.matmul(x, self._human_flat)
        return flat.reshape(flat.shape[:-1] + (len(self.patches), 3))

    def camera_values(self, x):
        """Normalized camera pixels under ``x``: ``(..., n_cam, n_patch, 3)``."""
        flat = ad.matmul(x, self._camera_flat)
        return flat.reshape(flat.shape[:-1] + (len(self.cameras), len(self.patches), 3))

    def human_lab(self, x):
        return lab_from_xyz(self.human_xyz(x), self.white_point)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    human: float
    camera: float
    white: float
    # mean over cameras of the weakest channel's MAE, normalized units, unclipped
    camera_min_mae: float


# -- losses ---------------------------------------------------------------


def per_patch_delta_e(x, y, ctx: OptimizationContext):
    return delta_e_2000(ctx.human_lab(x), ctx.human_lab(y))


def loss_human(x, y, ctx: OptimizationContext):
    """Mean CIEDE2000 between the patches under ``x`` and under ``y``."""
    return ad.mean(per_patch_delta_e(x, y, ctx), axis=-1)


def camera_channel_mae(x, y, ctx: OptimizationContext):
    """Per-camera, per-channel MAE over patches, ``(..., n_cam, 3)``."""
    diff = ctx.camera_values(x) - ctx.camera_values(y)
    return ad.mean(abs(diff), axis=-2)


def loss_camera(x, y, ctx: OptimizationContext, tau_c: float, full_scale: float = 1.0):
    """Negated weakest-channel MAE, clipped at ``tau_c``, averaged over cameras.

    ``full_scale`` converts from normalized pixel units; the result lies in
    ``[-tau_c * full_scale, 0]``.
    """
    mae = camera_channel_mae(x, y, ctx) * full_scale
    clipped = ad.minimum(mae, tau_c * full_scale)
    per_camera = -ad.amin(clipped, axis=-1)
    return ad.mean(per_camera, axis=-1)


def white_deltas(x, ctx: OptimizationContext):
    """Per-patch CIEDE2000 between the reference and the luminance-matched light ``x``."""
    y_lum = ad.matmul(x, ctx.led_luminance[:, None])[..., 0]
    lit = ad.value(y_lum) > 0
    # a dark light renders every patch black
    scale = ad.where(lit, ctx.reference_luminance / ad.where(lit, y_lum, 1.0), 0.0)
    xyz = ctx.human_xyz(x)
    if isinstance(scale, ad.Dual):
        xyz = xyz * scale.reshape(scale.shape + (1, 1))
    else:
        xyz = xyz * np.asarray(scale)[..., None, None]
    lab = lab_from_xyz(xyz, ctx.white_point)
    return delta_e_2000(ctx.reference_lab, lab)


def white_violation(delta_1, delta_2, tau_w: float):
    """Hinge sum ``sum_i relu(d1_i - tau_w) + relu(d2_i - tau_w)``."""
    return ad.sum(ad.relu(delta_1 - tau_w), axis=-1) + ad.sum(ad.relu(delta_2 - tau_w), axis=-1)


def loss_white(x, y, ctx: OptimizationContext, tau_w: float):
    return white_violation(white_deltas(x, ctx), white_deltas(y, ctx), tau_w)


def _terms(x, y, ctx, weights: LossWeights, thresholds: Thresholds):
    h = loss_human(x, y, ctx)
    mae = camera_channel_mae(x, y, ctx)
    scaled = mae * thresholds.camera_full_scale
    clipped = ad.minimum(scaled, thresholds.tau_c * thresholds.camera_full_scale)
    c = ad.mean(-ad.amin(clipped, axis=-1), axis=-1)
    w = loss_white(x, y, ctx, thresholds.tau_w)
    total = weights.w_h * h + weights.w_c * c + weights.w_w * w
    min_mae = np.mean(np.min(ad.value(mae), axis=-1), axis=-1)
    return total, h, c, w, min_mae


def total_loss(x, y, ctx: OptimizationContext, weights: LossWeights, thresholds: Thresholds):
    """Weighted objective. Batched inputs (``(..., n_led)``) give array fields."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total, h, c, w, min_mae = _terms(x, y, ctx, weights, thresholds)
    if np.ndim(total) == 0:
        return LossBreakdown(float(total), float(h), float(c), float(w), float(min_mae))
    return LossBreakdown(total, h, c, w, min_mae)


def gradient(x, y, ctx: OptimizationContext, weights: LossWeights, thresholds: Thresholds):
    """Forward-mode gradient of :func:`total_loss` w.r.t. ``concat(x, y)``.

    Returns ``(breakdown, grad)`` with ``grad`` of length ``2 * n_led``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DivergenceError("non-finite intensities", x=x, y=y)
    n = x.shape[0]
    seeds = ad.Dual.variables(np.concatenate([x, y]))
    total, h, c, w, min_mae = _terms(seeds[:n], seeds[n:], ctx, weights, thresholds)
    total = total if isinstance(total, ad.Dual) else ad.Dual.constant(total, 2 * n)
    if not np.isfinite(total.val) or not np.all(np.isfinite(total.eps)):
        raise DivergenceError("non-finite loss or gradient", x=x, y=y)
    breakdown = LossBreakdown(
        float(total.val), float(ad.value(h)), float(ad.value(c)), float(ad.value(w)), float(min_mae)
    )
    return breakdown, np.array(total.eps, dtype=float)


# -- result types -------------------------------------------------------------


@dataclass(frozen=True)
class PairMetrics:
    delta_e_mean: float
    delta_e_max: float
    camera_mae_min_channel: float  # 8-bit units, mean over cameras
    camera_mae_mean: float  # 8-bit units, mean over cameras and channels
    cri_1: float
    cri_2: float
    camera_mae_min_channel_per_camera: tuple[float, ...] = ()
    loss_white: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["camera_mae_min_channel_per_camera"] = list(self.camera_mae_min_channel_per_camera)
        return d


@dataclass(frozen=True, eq=False)
class SpectraPair:
    x: IntensityVector
    y: IntensityVector
    l1: Spectrum
    l2: Spectrum
    metrics: PairMetrics
    camera_labels: tuple[str, ...] = ()

    def swapped(self) -> "SpectraPair":
        return SpectraPair(self.y, self.x, self.l2, self.l1, self.metrics, self.camera_labels)

    def to_dict(self) -> dict:
        grid = self.l1.grid
        return {
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "grid": {"start_nm": grid.start_nm, "step_nm": grid.step_nm, "count": grid.count},
            "l1": [float(v) for v in self.l1.values],
            "l2": [float(v) for v in self.l2.values],
            "metrics": self.metrics.to_dict(),
            "camera_labels": list(self.camera_labels),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectraPair":
        from specmark.colorimetry import WavelengthGrid

        grid = WavelengthGrid(**data["grid"])
        m = dict(data["metrics"])
        m["camera_mae_min_channel_per_camera"] = tuple(m.get("camera_mae_min_channel_per_camera", ()))
        return cls(
            IntensityVector(np.array(data["x"])),
            IntensityVector(np.array(data["y"])),
            Spectrum(grid, np.array(data["l1"])),
            Spectrum(grid, np.array(data["l2"])),
            PairMetrics(**m),
            tuple(data.get("camera_labels", ())),
        )


def evaluate_pair(x, y, ctx: OptimizationContext, thresholds: Thresholds | None = None) -> PairMetrics:
    """Quality metrics for an intensity pair (MAE figures in 8-bit units)."""
    thresholds = thresholds or Thresholds()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    de = per_patch_delta_e(x, y, ctx)
    mae = camera_channel_mae(x, y, ctx) * EIGHT_BIT_FULL_SCALE
    per_cam = mae.min(axis=-1)
    if ctx.cri_samples is not None:
        l1 = compose_illumination(ctx.bank, x)
        l2 = compose_illumination(ctx.bank, y)
        cri_1 = cri(l1, ctx.reference, ctx.cri_samples, ctx.human).cri_value
        cri_2 = cri(l2, ctx.reference, ctx.cri_samples, ctx.human).cri_value
    else:
        cri_1 = cri_2 = float("nan")
    return PairMetrics(
        delta_e_mean=float(de.mean()),
        delta_e_max=float(de.max()),
        camera_mae_min_channel=float(per_cam.mean()),
        camera_mae_mean=float(mae.mean()),
        cri_1=float(cri_1),
        cri_2=float(cri_2),
        camera_mae_min_channel_per_camera=tuple(float(v) for v in per_cam),
        loss_white=float(loss_white(x, y, ctx, thresholds.tau_w)),
    )


def make_pair(x, y, ctx: OptimizationContext, thresholds: Thresholds | None = None) -> SpectraPair:
    xv, yv = IntensityVector(np.asarray(x, float)), IntensityVector(np.asarray(y, float))
    return SpectraPair(
        xv,
        yv,
        compose_illumination(ctx.bank, xv),
        compose_illumination(ctx.bank, yv),
        evaluate_pair(xv.values, yv.values, ctx, thresholds),
        tuple(ctx.cameras.labels),
    )


# -- Adam -------------------------------------------------------------------


class Adam:
    def __init__(self, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _sigmoid(u: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


@dataclass
class OptimizationResult:
    pair: SpectraPair
    best_iteration: int
    best_loss: LossBreakdown
    trace: np.ndarray = field(repr=False)  # (iterations + 1, 5): total, human, camera, white, min_mae

    TRACE_COLUMNS = ("total", "human", "camera", "white", "camera_min_mae")


def initial_intensities(ctx: OptimizationContext, weights: LossWeights, config: OptimizerConfig):
    """Start both lights at the reference fit; jitter them apart only when the
    camera term is active (it is the only term that needs x != y)."""
    lo, hi = config.bound_margin, 1.0 - config.bound_margin
    base = np.clip(ctx.reference_fit, lo, hi)
    if weights.w_c > 0 and config.init_noise > 0:
        rng = np.random.default_rng(config.seed)
        noise = rng.uniform(-config.init_noise, config.init_noise, size=(2, base.size))
        return np.clip(base + noise[0], lo, hi), np.clip(base + noise[1], lo, hi)
    return base.copy(), base.copy()


def selection_key(b: LossBreakdown, weights: LossWeights, thresholds: Thresholds, config: OptimizerConfig):
    """Feasibility-first ranking: white violation, then camera shortfall, then human loss.

    Terms whose weight is zero are left out of the ranking.
    """
    white = b.white if (weights.w_w > 0 and b.white > 1e-9) else 0.0
    if weights.w_c > 0:
        target = thresholds.tau_c * (1.0 - config.mae_band)
        shortfall = max(0.0, target - b.camera_min_mae)
    else:
        shortfall = 0.0
    human = b.human if weights.w_h > 0 else b.total
    return (white, shortfall, human)


def optimize_pair(
    ctx: OptimizationContext,
    weights: LossWeights | None = None,
    thresholds: Thresholds | None = None,
    config: OptimizerConfig | None = None,
    callback: Callable[[int, LossBreakdown], None] | None = None,
) -> OptimizationResult:
    """Adam over logistic surrogates of both intensity vectors.

    The returned pair is the best iterate under :func:`selection_key`, not
    necessarily the last one.
    """
    weights = weights or LossWeights()
    thresholds = thresholds or Thresholds()
    config = config or OptimizerConfig()
    n = ctx.n_led

    x0, y0 = initial_intensities(ctx, weights, config)
    u = _logit(np.concatenate([x0, y0]))
    adam = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon)

    trace = np.empty((config.iterations + 1, 5))
    best_key, best_iter, best_u, best_b = None, -1, None, None
    for it in range(config.iterations + 1):
        p = _sigmoid(u)
        try:
            b, g = gradient(p[:n], p[n:], ctx, weights, thresholds)
        except DivergenceError as exc:
            raise DivergenceError(f"non-finite loss at iteration {it}", iteration=it, x=p[:n], y=p[n:]) from exc
        trace[it] = (b.total, b.human, b.camera, b.white, b.camera_min_mae)
        key = selection_key(b, weights, thresholds, config)
        if best_key is None or key < best_key:
            best_key, best_iter, best_u, best_b = key, it, u.copy(), b
        if callback is not None:
            callback(it, b)
        if it == config.iterations:
            break
        u = adam.step(u, g * p * (1.0 - p))
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite parameters at iteration {it}", iteration=it, x=p[:n], y=p[n:])

    p = _sigmoid(best_u)
    logger.info("best iterate %d: %s", best_iter, best_b)
    pair = make_pair(p[:n], p[n:], ctx, thresholds)
    return OptimizationResult(pair, best_iter, best_b, trace)


def intensity_baseline_delta_e(light: Spectrum, ctx: OptimizationContext, ratio: float = 0.97) -> float:
    """Mean CIEDE2000 over the patches between ``light`` and ``ratio * light``."""
    xyz = ctx.patches.patches * light.values @ ctx.human.weights
    lab_a = lab_from_xyz(xyz, ctx.white_point)
    lab_b = lab_from_xyz(xyz * ratio, ctx.white_point)
    return float(np.mean(delta_e_2000(lab_a, lab_b)))
