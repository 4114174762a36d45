"""Alternating proximal-gradient trainer for paired skip-layer networks.

One network models sender effects (alpha), the other receiver effects
(beta).  Each outer iteration trains the beta net to convergence-budget
while alpha is frozen, then the alpha net while beta is frozen.  The L1
penalty on the skip coefficients is applied through a hierarchical
proximal operator that also rescales the first hidden layer, so a
feature whose skip coefficient is thresholded to zero is cut out of the
nonlinear part as well.  Selection is read off as the exactly-nonzero
skip coefficients.

Sum identifiability (sum alpha = sum beta) is enforced softly during
training by a quadratic penalty and exactly afterwards by a constant
shift, which leaves every fitted rate unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .netdata import CountNetwork, AttributeMatrix
from .objective import (
    LossBreakdown,
    poisson_nll,
    nll_node_gradients,
    identifiability_penalty,
    l1_penalty,
)
from .rng import Rng
from .skipnet import (
    SkipLayerNet,
    forward_batch,
    init_net,
    _forward_activations,
    _backward_from_activations,
)

__all__ = [
    "FitConfig",
    "HeterogeneityEstimate",
    "OuterIterationRecord",
    "GridResult",
    "FitDivergenceError",
    "hierarchical_prox",
    "update_side",
    "fit",
    "extract_selected",
    "hbic",
    "grid_search",
]

_MAX_RHO_HALVINGS = 10


class FitDivergenceError(RuntimeError):
    """No descending step could be found after exhausting learning-rate halvings."""


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of one fit.

    ``gamma`` and ``epsilon`` default to None and are resolved against
    the data size when fitting: gamma = 1/n, epsilon = 1e-4 * sqrt(n).
    ``hidden_widths_beta`` lets the receiver net use a different
    architecture; None means same as ``hidden_widths``.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    gamma: float | None = None
    M: float = 10.0
    rho: float = 1e-3
    epsilon: float | None = None
    t_max_outer: int = 50
    inner_epochs: int = 1000
    hidden_widths: tuple[int, ...] = (32, 16)
    hidden_widths_beta: tuple[int, ...] | None = None
    z_n: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be non-negative")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.M <= 0:
            raise ValueError("M must be positive")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.t_max_outer < 1:
            raise ValueError("t_max_outer must be a positive integer")
        if self.inner_epochs < 1:
            raise ValueError("inner_epochs must be a positive integer")
        if self.z_n <= 0:
            raise ValueError("z_n must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        for w in tuple(self.hidden_widths) + tuple(self.hidden_widths_beta or ()):
            if int(w) != w or w < 1:
                raise ValueError("hidden widths must be positive integers")
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.hidden_widths_beta is not None:
            object.__setattr__(
                self, "hidden_widths_beta", tuple(int(w) for w in self.hidden_widths_beta)
            )

    def resolved_gamma(self, n: int) -> float:
        return 1.0 / n if self.gamma is None else self.gamma

    def resolved_epsilon(self, n: int) -> float:
        return 1e-4 * math.sqrt(n) if self.epsilon is None else self.epsilon


@dataclass
class OuterIterationRecord:
    """State after one outer iteration (beta update then alpha update)."""

    outer_iter: int
    loss: LossBreakdown
    delta_alpha: float
    delta_beta: float


@dataclass
class HeterogeneityEstimate:
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    s_alpha: set[int]
    s_beta: set[int]
    net_alpha: SkipLayerNet
    net_beta: SkipLayerNet
    outer_iterations: int
    final_loss: LossBreakdown
    converged: bool
    # alpha_hat[i] = forward(net_alpha, x_i) + centering_shift, and the
    # beta side subtracts the same constant.
    centering_shift: float = 0.0
    history: list[OuterIterationRecord] = field(default_factory=list)


def hierarchical_prox(w1: np.ndarray, theta: np.ndarray, tau: float, M: float):
    """Soft-threshold theta, then cap each w1 row's 2-norm at M*|theta_k|.

    ``w1`` has one row per input feature (the first layer seen
    input-major).  A thresholded-to-zero coefficient zeroes its row; a
    zero row is left alone.  Returns new arrays, inputs untouched.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if M <= 0:
        raise ValueError("M must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    if w1.shape[0] != theta.shape[0]:
        raise ValueError("w1 must have one row per theta entry")
    theta_new = np.sign(theta) * np.maximum(np.abs(theta) - tau, 0.0)
    norms = np.sqrt((w1 * w1).sum(axis=1))
    cap = M * np.abs(theta_new)
    scale = np.ones_like(norms)
    live = norms > 0.0
    scale[live] = np.minimum(1.0, cap[live] / norms[live])
    return w1 * scale[:, np.newaxis], theta_new


def _prox_net(net: SkipLayerNet, tau: float, M: float) -> None:
    w1t, theta_new = hierarchical_prox(net.layers[0].weights.T, net.theta, tau, M)
    net.layers[0].weights = np.ascontiguousarray(w1t.T)
    net.theta = theta_new


def _hierarchy_gap(net: SkipLayerNet, M: float) -> float:
    norms = np.sqrt((net.layers[0].weights ** 2).sum(axis=0))
    return float((norms - M * np.abs(net.theta)).max())


def update_side(
    side: str,
    net: SkipLayerNet,
    X,
    A: CountNetwork,
    fixed_vals: np.ndarray,
    lam: float,
    gamma: float,
    rho: float,
    M: float,
    z_n: float,
    inner_epochs: int,
):
    """Train one net for ``inner_epochs`` proximal-gradient steps.

    The other side's fitted values stay frozen at ``fixed_vals``; the
    quadratic identifiability penalty pulls this side's sum toward the
    frozen side's sum.  A step that sends the smooth loss to +inf, or
    that increases the composite objective beyond rounding slack (a
    fixed-step overshoot cycle looks exactly like this), is undone and
    retried with rho halved, up to 10 consecutive halvings per step;
    rho recovers after accepted steps.  If the halvings run out while
    the residual increase is tiny or still shrinking in proportion to
    the step, the net sits at a fixed point of the prox-gradient map
    and the loop stops early; running out against a large or infinite
    increase raises FitDivergenceError.

    Returns (fitted values, updated net, smooth-loss trace).  The trace
    has up to inner_epochs+1 entries, entry 0 being the loss at entry;
    the input net is not mutated.
    """
    if side not in ("alpha", "beta"):
        raise ValueError(f"side must be 'alpha' or 'beta', got {side!r}")
    if inner_epochs < 0:
        raise ValueError("inner_epochs must be non-negative")
    net = net.copy()
    x2d = getattr(X, "values", X)
    fixed = np.asarray(fixed_vals, dtype=np.float64)
    target_sum = float(fixed.sum())

    def smooth_loss(vals: np.ndarray) -> float:
        if not np.all(np.isfinite(vals)):
            return np.inf
        if side == "alpha":
            nll = poisson_nll(vals, fixed, A, z_n)
        else:
            nll = poisson_nll(fixed, vals, A, z_n)
        if not np.isfinite(nll):
            return np.inf
        ident, _ = identifiability_penalty(vals, target_sum, gamma)
        return nll + ident

    pre, post, vals = _forward_activations(net, x2d)
    loss = smooth_loss(vals)
    trace = [loss]
    if inner_epochs == 0:
        return vals, net, np.asarray(trace)
    if not np.isfinite(loss):
        raise FitDivergenceError(f"{side} update entered with non-finite loss")

    # the descent safeguard compares the composite objective (smooth +
    # L1), since a prox step may raise the smooth part while lowering
    # the composite
    composite = loss + lam * float(np.abs(net.theta).sum())
    rho_full = rho
    halvings = 0
    first_increase = np.inf
    epoch = 0
    while epoch < inner_epochs:
        if side == "alpha":
            upstream = nll_node_gradients(vals, fixed, A, z_n, "alpha")
        else:
            upstream = nll_node_gradients(fixed, vals, A, z_n, "beta")
        _, d_ident = identifiability_penalty(vals, target_sum, gamma)
        grads = _backward_from_activations(net, x2d, pre, post, upstream + d_ident)

        saved = (net.theta, [layer.copy() for layer in net.layers])
        net.theta = net.theta - rho * grads.d_theta
        for layer, g in zip(net.layers, grads.d_layers):
            layer.weights = layer.weights - rho * g.weights
            layer.biases = layer.biases - rho * g.biases
        _prox_net(net, rho * lam, M)

        pre, post, vals = _forward_activations(net, x2d)
        new_loss = smooth_loss(vals)
        new_composite = (
            new_loss + lam * float(np.abs(net.theta).sum())
            if np.isfinite(new_loss) else np.inf
        )
        if new_composite > composite + 1e-9 * max(1.0, abs(composite)):
            net.theta, net.layers = saved
            pre, post, vals = _forward_activations(net, x2d)
            increase = new_composite - composite
            if halvings == 0:
                first_increase = increase
            halvings += 1
            if halvings > _MAX_RHO_HALVINGS:
                # an increase that kept shrinking with rho is the cap
                # rescale pushing uphill at a rate proportional to the
                # step: the net sits at a fixed point of the map and no
                # step size can move it.  An increase that stayed large
                # or infinite is real divergence.
                tiny = increase <= 1e-6 * max(1.0, abs(composite))
                vanishing = (
                    np.isfinite(first_increase)
                    and increase <= first_increase / 256.0
                    and increase <= 1e-3 * max(1.0, abs(composite))
                )
                if np.isfinite(increase) and (tiny or vanishing):
                    break
                raise FitDivergenceError(
                    f"{side} update diverged at epoch {epoch}: loss would not "
                    f"decrease after {_MAX_RHO_HALVINGS} halvings of rho "
                    f"(last rho {rho:g})"
                )
            rho *= 0.5
            continue
        loss = new_loss
        composite = new_composite
        trace.append(loss)
        epoch += 1
        halvings = 0
        rho = min(2.0 * rho, rho_full)

    assert _hierarchy_gap(net, M) <= 1e-9 * max(1.0, M)
    return vals, net, np.asarray(trace)


def _loss_breakdown(alpha_vals, beta_vals, A, config: FitConfig, gamma: float,
                    net_alpha, net_beta) -> LossBreakdown:
    gap = float(alpha_vals.sum() - beta_vals.sum())
    return LossBreakdown(
        nll=poisson_nll(alpha_vals, beta_vals, A, config.z_n),
        l1_alpha=l1_penalty(net_alpha.theta, config.lambda1),
        l1_beta=l1_penalty(net_beta.theta, config.lambda2),
        ident_penalty=gamma * gap * gap,
    )


def fit(A: CountNetwork, X, config: FitConfig) -> HeterogeneityEstimate:
    """Alternating fit of the sender and receiver nets.

    Per outer iteration the beta net is updated first, then the alpha
    net; the loop stops when both fitted-value vectors move less than
    epsilon in 2-norm, or after t_max_outer iterations (converged=False).
    """
    xmat = X if isinstance(X, AttributeMatrix) else AttributeMatrix(np.asarray(X))
    if A.n != xmat.n:
        raise ValueError(f"network has {A.n} nodes but attributes have {xmat.n} rows")
    n, p = xmat.n, xmat.p
    gamma = config.resolved_gamma(n)
    epsilon = config.resolved_epsilon(n)
    widths_beta = config.hidden_widths_beta or config.hidden_widths

    rng = Rng(config.seed)
    net_alpha = init_net(p, config.hidden_widths, rng)
    net_beta = init_net(p, widths_beta, rng)
    # tau=0 projection so the hierarchy constraint holds from the start
    _prox_net(net_alpha, 0.0, config.M)
    _prox_net(net_beta, 0.0, config.M)

    alpha_vals = forward_batch(net_alpha, xmat)
    beta_vals = forward_batch(net_beta, xmat)

    history: list[OuterIterationRecord] = []
    converged = False
    outer_done = 0
    for t in range(1, config.t_max_outer + 1):
        try:
            beta_new, net_beta, _ = update_side(
                "beta", net_beta, xmat, A, alpha_vals, config.lambda2,
                gamma, config.rho, config.M, config.z_n, config.inner_epochs,
            )
            delta_beta = float(np.linalg.norm(beta_new - beta_vals))
            beta_vals = beta_new
            alpha_new, net_alpha, _ = update_side(
                "alpha", net_alpha, xmat, A, beta_vals, config.lambda1,
                gamma, config.rho, config.M, config.z_n, config.inner_epochs,
            )
            delta_alpha = float(np.linalg.norm(alpha_new - alpha_vals))
            alpha_vals = alpha_new
        except FitDivergenceError as exc:
            raise FitDivergenceError(f"outer iteration {t}: {exc}") from exc
        outer_done = t
        history.append(OuterIterationRecord(
            t,
            _loss_breakdown(alpha_vals, beta_vals, A, config, gamma, net_alpha, net_beta),
            delta_alpha,
            delta_beta,
        ))
        if delta_alpha < epsilon and delta_beta < epsilon:
            converged = True
            break

    # exact sum matching; the same constant moves both sides so every
    # alpha_i + beta_j is unchanged up to rounding
    c = (float(alpha_vals.sum()) - float(beta_vals.sum())) / (2.0 * n)
    alpha_hat = alpha_vals - c
    beta_hat = beta_vals + c

    return HeterogeneityEstimate(
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        s_alpha=extract_selected(net_alpha.theta),
        s_beta=extract_selected(net_beta.theta),
        net_alpha=net_alpha,
        net_beta=net_beta,
        outer_iterations=outer_done,
        final_loss=_loss_breakdown(alpha_hat, beta_hat, A, config, gamma,
                                   net_alpha, net_beta),
        converged=converged,
        centering_shift=-c,
        history=history,
    )


def extract_selected(theta, tol: float = 1e-12) -> set[int]:
    """Indices of nonzero skip coefficients.

    The prox writes exact zeros, so strict nonzero-ness is the real
    rule; tol only guards values that went through text serialization.
    """
    theta = np.asarray(theta, dtype=np.float64)
    return set(int(k) for k in np.nonzero(np.abs(theta) > tol)[0])


def hbic(nll_at_fit: float, s_total: int, n: int, p: int) -> float:
    """High-dimensional BIC: 2*nll + s * loglog(m) * log(p), m = n(n-1) dyads."""
    if n < 2 or p < 1 or s_total < 0:
        raise ValueError("need n >= 2, p >= 1, s_total >= 0")
    m = n * (n - 1)
    return 2.0 * nll_at_fit + s_total * math.log(math.log(m)) * math.log(p)


@dataclass
class GridResult:
    lambda1: float
    lambda2: float
    M: float
    s_total: int
    nll: float
    hbic: float
    error: str | None = None


def _fit_one_triple(args):
    A, X, base_config, triple = args
    lam1, lam2, m = triple
    config = replace(base_config, lambda1=lam1, lambda2=lam2, M=m)
    try:
        est = fit(A, X, config)
    except FitDivergenceError as exc:
        return None, str(exc)
    return est, None


def grid_search(A: CountNetwork, X, base_config: FitConfig, grid, jobs: int = 1):
    """Fit every (lambda1, lambda2, M) triple and pick the HBIC argmin.

    All fits reuse base_config's seed so initializations match across
    the grid.  Ties go to the sparser fit, then the smaller
    lambda1+lambda2, then the earlier grid entry.  Returns
    (best_config, best_estimate, results) with one GridResult per triple
    in grid order.
    """
    grid = [(float(l1), float(l2), float(m)) for (l1, l2, m) in grid]
    if not grid:
        raise ValueError("grid must be non-empty")
    xmat = X if isinstance(X, AttributeMatrix) else AttributeMatrix(np.asarray(X))
    n, p = A.n, xmat.p

    tasks = [(A, xmat, base_config, triple) for triple in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fits = list(pool.map(_fit_one_triple, tasks))
    else:
        fits = [_fit_one_triple(t) for t in tasks]

    results: list[GridResult] = []
    best_key = None
    best_idx = -1
    for idx, ((lam1, lam2, m), (est, err)) in enumerate(zip(grid, fits)):
        if est is None:
            results.append(GridResult(lam1, lam2, m, 0, math.nan, math.inf, err))
            continue
        s_total = len(est.s_alpha) + len(est.s_beta)
        score = hbic(est.final_loss.nll, s_total, n, p)
        results.append(GridResult(lam1, lam2, m, s_total, est.final_loss.nll, score))
        key = (score, s_total, lam1 + lam2, idx)
        if best_key is None or key < best_key:
            best_key = key
            best_idx = idx
    if best_key is None:
        raise FitDivergenceError("every grid fit diverged")

    lam1, lam2, m = grid[best_idx]
    best_config = replace(base_config, lambda1=lam1, lambda2=lam2, M=m)
    return best_config, fits[best_idx][0], results
