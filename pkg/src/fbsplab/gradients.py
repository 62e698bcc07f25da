"""Bank-energy regularization loss and analytic parameter gradients.

The loss pushes every row of an fbsp bank toward unit energy,

    L(bank) = (1/F) * sum_k (||K_k||^2 - 1)^2,

which is exactly zero at the STFT-equivalent starting point and invariant
under the per-row phases, so its f_c gradient vanishes identically.

Analytic derivatives are written against the closed kernel form, while
``finite_difference_oracle`` estimates the same quantities by central
differences through completely separate code; the oracle is the ground
truth every analytic path is tested against.

Singular points: the spline envelope ``sinc(f_b t / m) ** m`` is not
differentiable where the sinc argument sits on a nonzero integer (a sinc
zero) at fractional m, and the per-tap log factor diverges there. Gradient
evaluation inside an exclusion radius of 1e-6 (in sinc-argument units)
around those zeros raises ``SingularGradientError``; training code projects
proposed steps away from the zones instead of stepping into them. The m = 0
boundary is special: the envelope is the constant 1 there, the kernel is
smooth in f_b and f_c, and the m-derivative is defined as 0, the loss's
limiting one-sided derivative at the unit-energy minimum. (Away from that
minimum no finite one-sided m-derivative exists at m = 0: a finite
difference with step h grows like log h. See the gradient tests.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from fbsplab.bank import FbspParams, KernelBank, centered_taps, dft_grid, fbsp_kernel

__all__ = [
    "ParamGradient",
    "SingularGradientError",
    "SINC_ZONE_RADIUS",
    "fbsp_loss",
    "loss_gradient",
    "kernel_jacobian_vector",
    "energy_pairing",
    "finite_difference_oracle",
    "sinc_zone_clearance",
    "admissible_draw",
    "gradient_check_report",
]

SINC_ZONE_RADIUS = 1e-6


class SingularGradientError(ValueError):
    """Raised when a gradient is requested inside a sinc-zero exclusion zone."""


@dataclass(frozen=True)
class ParamGradient:
    """Gradient with respect to (m, f_b, f_c[0..F-1])."""

    d_m: float
    d_fb: float
    d_fc: np.ndarray

    def __post_init__(self) -> None:
        d_fc = np.array(self.d_fc, dtype=np.float64)
        if d_fc.ndim != 1:
            raise ValueError("d_fc must be 1-D")
        if not (math.isfinite(self.d_m) and math.isfinite(self.d_fb)
                and np.all(np.isfinite(d_fc))):
            raise ValueError("gradient contains non-finite components")
        d_fc.setflags(write=False)
        object.__setattr__(self, "d_m", float(self.d_m))
        object.__setattr__(self, "d_fb", float(self.d_fb))
        object.__setattr__(self, "d_fc", d_fc)


def fbsp_loss(bank: KernelBank) -> float:
    """Mean squared deviation of row energies from 1."""
    norms = np.sum(np.abs(bank.weights) ** 2, axis=1)
    return float(np.mean((norms - 1.0) ** 2))


# ---------------------------------------------------------------------------
# envelope derivative machinery
# ---------------------------------------------------------------------------


def sinc_zone_clearance(m: float, f_b: float, n_fft: int) -> float:
    """Distance (in sinc-argument units) from the nearest envelope zero.

    Returns +inf at m = 0, where no tap has a finite sinc argument.
    """
    if m == 0.0:
        return math.inf
    u = f_b * centered_taps(n_fft) / m
    nearest = np.round(u)
    dist = np.abs(u - nearest)
    dist[nearest == 0.0] = math.inf  # u near 0 is the smooth sinc center
    return float(np.min(dist))


def _require_safe(params: FbspParams, n_fft: int) -> None:
    m = params.m
    if m == 0.0 or float(m).is_integer():
        return
    clearance = sinc_zone_clearance(m, params.f_b, n_fft)
    if clearance < SINC_ZONE_RADIUS:
        raise SingularGradientError(
            f"gradient at m={m}, f_b={params.f_b} sits {clearance:.3g} sinc-argument "
            f"units from an envelope zero (exclusion radius {SINC_ZONE_RADIUS:g}); "
            "the complex log diverges there"
        )


def _envelope_terms(m: float, f_b: float, n_fft: int):
    """Per-tap quantities shared by the loss and kernel derivatives.

    Returns (a, m_term, fb_term, env, denv_dm, denv_dfb) where a = |env|^2,
    m_term = d a / dm and fb_term = d a / df_b, and the env triplet holds the
    complex envelope and its parameter derivatives. Exact sinc zeros are
    patched with their limiting values (only reachable at integer m, since
    fractional m raises beforehand).
    """
    taps = centered_taps(n_fft)
    u = f_b * taps / m
    s = np.sinc(u)
    zero = s == 0.0
    cos_pi_u = np.cos(np.pi * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_abs = np.log(np.abs(s))
        # q = u * sinc'(u) / sinc(u), stable form away from zeros
        q = cos_pi_u / s - 1.0
        a = np.exp(2.0 * m * log_abs)
        env = np.exp(m * log_abs) * np.exp(1j * np.pi * m * (s < 0))
        m_term = 2.0 * a * (log_abs - q)
        fb_term = 2.0 * a * q * (m / f_b)
        denv_dm = env * ((log_abs + 1j * np.pi * (s < 0)) - q)
        denv_dfb = env * q * (m / f_b)
    if np.any(zero):
        a[zero] = 0.0
        env[zero] = 0.0
        m_term[zero] = 0.0
        fb_term[zero] = 0.0
        if m == 1.0:
            # lim env * q = s^(m-1) (cos(pi u) - s) and lim env * Log s = 0
            denv_dm[zero] = -cos_pi_u[zero]
            denv_dfb[zero] = cos_pi_u[zero] * (m / f_b)
        else:
            denv_dm[zero] = 0.0
            denv_dfb[zero] = 0.0
    return a, m_term, fb_term, env, denv_dm, denv_dfb


def loss_gradient(params: FbspParams, n_fft: int) -> ParamGradient:
    """Analytic gradient of fbsp_loss(fbsp_kernel(params, n_fft)).

    The row energy is shared across filters (f_c only rotates phases), so
    d_fc is exactly zero. At m = 0 the loss reduces to (f_b - 1)^2 and the
    m-component is the boundary convention 0.
    """
    count = params.num_filters
    if params.m == 0.0:
        return ParamGradient(d_m=0.0, d_fb=2.0 * (params.f_b - 1.0),
                             d_fc=np.zeros(count))
    _require_safe(params, n_fft)
    a, m_term, fb_term, _, _, _ = _envelope_terms(params.m, params.f_b, n_fft)
    g = params.f_b * float(np.sum(a)) / n_fft
    dg_dm = params.f_b * float(np.sum(m_term)) / n_fft
    dg_dfb = g / params.f_b + params.f_b * float(np.sum(fb_term)) / n_fft
    lead = 2.0 * (g - 1.0)
    return ParamGradient(d_m=lead * dg_dm, d_fb=lead * dg_dfb, d_fc=np.zeros(count))


def kernel_jacobian_vector(
    params: FbspParams,
    n_fft: int,
    cotangent: np.ndarray,
) -> ParamGradient:
    """Pull a bank-space cotangent back to parameter space.

    Returns the derivative of the pairing scalar

        phi(theta) = 2 * Re sum_{k,n} cotangent[k][n] * K_k[n](theta)

    with respect to each parameter, so composing with an outer objective's
    complex cotangent gives the chain rule through the bank. With
    cotangent = conj(K)/... the self-pairing recovers energy derivatives:
    ``energy_pairing(conj(K), bank)`` equals ``sum_k ||K_k||^2`` and this
    function with that cotangent returns its exact parameter gradient.
    """
    cot = np.asarray(cotangent, dtype=np.complex128)
    count = params.num_filters
    if cot.shape != (count, n_fft):
        raise ValueError(
            f"cotangent shape {cot.shape} does not match bank shape {(count, n_fft)}"
        )
    taps = centered_taps(n_fft)
    scale = np.sqrt(params.f_b) / np.sqrt(n_fft)
    phase = np.exp(2j * np.pi * np.outer(params.f_c, taps))
    if params.m == 0.0:
        env = np.ones(n_fft, dtype=np.complex128)
        denv_dm = np.zeros(n_fft, dtype=np.complex128)
        denv_dfb = np.zeros(n_fft, dtype=np.complex128)
    else:
        _require_safe(params, n_fft)
        _, _, _, env, denv_dm, denv_dfb = _envelope_terms(params.m, params.f_b, n_fft)
    weights = scale * env[None, :] * phase
    d_dm = scale * denv_dm[None, :] * phase
    # d/df_b includes the sqrt(f_b) prefactor alongside the envelope term
    d_dfb = weights / (2.0 * params.f_b) + scale * denv_dfb[None, :] * phase
    prod = cot * weights
    d_fc = 2.0 * np.real(prod @ (2j * np.pi * taps))
    return ParamGradient(
        d_m=2.0 * float(np.real(np.sum(cot * d_dm))),
        d_fb=2.0 * float(np.real(np.sum(cot * d_dfb))),
        d_fc=d_fc,
    )


def energy_pairing(cotangent: np.ndarray, bank: KernelBank) -> float:
    """The pairing scalar 2 * Re sum(cotangent * weights).

    This is the function whose parameter derivative
    ``kernel_jacobian_vector`` computes; tests difference it directly.
    """
    return 2.0 * float(np.real(np.sum(np.asarray(cotangent) * bank.weights)))


def finite_difference_oracle(
    scalar_fn: Callable[[FbspParams], float],
    params: FbspParams,
    step: float = 1e-6,
) -> ParamGradient:
    """Difference-quotient gradient of a scalar function of the parameters.

    Ground truth for the analytic paths; shares no code with them. Uses
    central differences, falling back to a second-order one-sided stencil
    when a probe would leave the valid domain (f_c entries at 0 or 0.5, or
    m within one step of 0), so accuracy stays O(step^2) throughout.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    def derivative(shift: Callable[[float], FbspParams]) -> float:
        try:
            lo, hi = shift(-step), shift(step)
        except ValueError:
            pass
        else:
            return (scalar_fn(hi) - scalar_fn(lo)) / (2.0 * step)
        base = scalar_fn(params)
        try:
            p1, p2 = shift(step), shift(2.0 * step)
            return (-3.0 * base + 4.0 * scalar_fn(p1) - scalar_fn(p2)) / (2.0 * step)
        except ValueError:
            p1, p2 = shift(-step), shift(-2.0 * step)
            return (3.0 * base - 4.0 * scalar_fn(p1) + scalar_fn(p2)) / (2.0 * step)

    def shift_fc(k: int) -> Callable[[float], FbspParams]:
        def shift(delta: float) -> FbspParams:
            moved = params.f_c.copy()
            moved[k] += delta
            return replace(params, f_c=moved)
        return shift

    d_m = derivative(lambda d: replace(params, m=params.m + d))
    d_fb = derivative(lambda d: replace(params, f_b=params.f_b + d))
    d_fc = np.array([derivative(shift_fc(k)) for k in range(params.num_filters)])
    return ParamGradient(d_m=d_m, d_fb=d_fb, d_fc=d_fc)


# ---------------------------------------------------------------------------
# randomized draw admission and the gradcheck report
# ---------------------------------------------------------------------------


def admissible_draw(
    rng: np.random.Generator,
    n_fft: int,
    step: float = 1e-6,
    margin: float = 1e-2,
    m_range: tuple[float, float] = (0.0, 4.0),
    fb_range: tuple[float, float] = (0.25, 4.0),
) -> FbspParams:
    """Draw (m, f_b) uniformly, rejecting draws a difference quotient cannot
    resolve.

    Two conditions gate admission. The clearance from envelope zeros must be
    at least ``margin`` in sinc-argument units, since the objective's higher
    derivatives blow up against the zeros. And the probe points m +- 2 step,
    f_b +- 2 step may sweep each tap's sinc argument by at most a thousandth
    of that clearance, which caps the quadratic truncation error near 1e-6
    relative; this rejects small m outright, where perturbing m slides taps
    across whole zero spacings. f_c is the DFT grid.
    """
    grid = dft_grid(n_fft)
    t_max = (n_fft - 1) / 2.0
    while True:
        m = rng.uniform(*m_range)
        f_b = rng.uniform(*fb_range)
        if m <= 2.0 * step:
            continue
        clearance = sinc_zone_clearance(m, f_b, n_fft)
        if clearance < margin:
            continue
        u_max = f_b * t_max / m
        probe_sweep = 2.0 * step * u_max * max(1.0 / m, 1.0 / f_b)
        if probe_sweep > 1e-3 * clearance:
            continue
        return FbspParams(m=m, f_b=f_b, f_c=grid)


def _compare(analytic: float, numeric: float,
             rel_tol: float = 1e-5, abs_tol: float = 1e-8) -> tuple[float, bool]:
    err = abs(analytic - numeric)
    if err < abs_tol:
        return err, True
    rel = err / max(abs(analytic), abs(numeric))
    return rel, rel < rel_tol


def gradient_check_report(
    n_fft: int = 64,
    seed: int = 0,
    draws: int = 5,
    point: tuple[float, float] = (1.7, 0.9),
    step: float = 1e-6,
) -> dict:
    """Run the standard gradient checks and return a JSON-ready report.

    Each entry records {param, analytic, numeric, rel_error, status}. The
    suite covers the loss gradient at a fixed point and at random admitted
    draws (m and f_b against central differences, f_c against exact zero),
    plus the cotangent pullback against differences of the pairing scalar.
    """

    def loss_of(p: FbspParams) -> float:
        return fbsp_loss(fbsp_kernel(p, n_fft))

    checks: list[dict] = []

    def record(param: str, analytic: float, numeric: float,
               rel_tol: float = 1e-5, abs_tol: float = 1e-8) -> None:
        err, ok = _compare(analytic, numeric, rel_tol, abs_tol)
        checks.append({
            "param": param,
            "analytic": float(analytic),
            "numeric": float(numeric),
            "rel_error": float(err),
            "status": "pass" if ok else "fail",
        })

    rng = np.random.default_rng(seed)
    points = [FbspParams(m=point[0], f_b=point[1], f_c=dft_grid(n_fft))]
    points += [admissible_draw(rng, n_fft, step=step) for _ in range(draws)]

    for i, params in enumerate(points):
        tag = "point" if i == 0 else f"draw{i - 1}"
        analytic = loss_gradient(params, n_fft)
        numeric = finite_difference_oracle(loss_of, params, step=step)
        record(f"{tag}.m", analytic.d_m, numeric.d_m)
        record(f"{tag}.f_b", analytic.d_fb, numeric.d_fb)
        worst = int(np.argmax(np.abs(numeric.d_fc)))
        exact_zero = float(np.max(np.abs(analytic.d_fc)))
        record(f"{tag}.f_c[{worst}]", exact_zero, numeric.d_fc[worst],
               rel_tol=1e-8, abs_tol=1e-8)

    # cotangent pullback against differences of the pairing scalar
    params = points[0]
    cot = (rng.standard_normal((params.num_filters, n_fft))
           + 1j * rng.standard_normal((params.num_filters, n_fft)))

    def paired(p: FbspParams) -> float:
        return energy_pairing(cot, fbsp_kernel(p, n_fft))

    analytic = kernel_jacobian_vector(params, n_fft, cot)
    numeric = finite_difference_oracle(paired, params, step=step)
    record("pullback.m", analytic.d_m, numeric.d_m)
    record("pullback.f_b", analytic.d_fb, numeric.d_fb)
    worst = int(np.argmax(np.abs(analytic.d_fc)))
    record(f"pullback.f_c[{worst}]", analytic.d_fc[worst], numeric.d_fc[worst])

    failed = [c["param"] for c in checks if c["status"] != "pass"]
    return {
        "n_fft": n_fft,
        "seed": seed,
        "step": step,
        "checks": checks,
        "status": "fail" if failed else "pass",
        "failed": failed,
    }
