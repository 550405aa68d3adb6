"""Minimisation de T_λ(z) = L(y, Bz) + λ Σ_{j≠constante} |z_j|.

L est la log-vraisemblance négative de Bernoulli divisée par n. La méthode
alterne un pas du premier ordre à seuillage doux (qui estime l'ensemble actif)
et un pas de Newton réduit aux composantes non nulles, avec repli sur un pas de
Newton amorti puis sur le pas du premier ordre.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from patternsearch.core.patterns import PatternModel
from patternsearch.exceptions import SolverError

logger = logging.getLogger(__name__)

# Au-delà, p vaut 0 ou 1 en double précision.
MAX_LOGIT = 36.0
ALPHA_BOUNDS = (1e-12, 1e12)


class SolverConfig(BaseModel):
    """Paramètres de l'algorithme à ensemble actif."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tol: float = Field(1e-6, ge=0)
    eta: float = Field(0.5, gt=0, lt=1)
    alpha0: float = Field(1.0, gt=0)
    sigma: Optional[float] = Field(None, gt=0, le=1)
    newton_max_inactive: PositiveInt = 500
    max_iters: PositiveInt = 1000
    seed: int = 0
    record_trace: bool = False

    def sampling_fraction(self, n_rows, n_columns):
        """σ effectif : 0.1 quand N_B > 10 n, 1 sinon, sauf valeur explicite."""
        if self.sigma is not None:
            return self.sigma
        return 0.1 if n_columns > 10 * n_rows else 1.0


def logistic_loss(f, y):
    """(1/n) Σ [log(1 + e^f) - y f], sous forme sans débordement."""
    return float(np.mean(np.log1p(np.exp(-np.abs(f))) + np.maximum(f, 0.0) - y * f))


def probabilities(f):
    return expit(np.clip(f, -MAX_LOGIT, MAX_LOGIT))


def intercept_mle(y):
    """Estimateur du maximum de vraisemblance de μ pour le modèle constant (borné à ±MAX_LOGIT)."""
    ybar = float(np.mean(y))
    if ybar <= 0.0:
        return -MAX_LOGIT
    if ybar >= 1.0:
        return MAX_LOGIT
    return float(np.clip(math.log(ybar / (1.0 - ybar)), -MAX_LOGIT, MAX_LOGIT))


@dataclass(frozen=True)
class LossEvaluation:
    value: float
    gradient: np.ndarray
    hessian: Optional[np.ndarray]
    probabilities: np.ndarray


def neg_log_lik_grad_hess(design, y, z, subset=None, hessian=False):
    """
    Valeur, gradient et (optionnellement) bloc de hessienne de L.
    Args:
        design (DesignMatrix): Matrice de plan.
        y (array): Réponses 0/1.
        z (array): Coefficients (constante incluse).
        subset (array, optional): Colonnes où calculer gradient et hessienne.
        hessian (bool): Calculer le bloc (1/n) B_s' W B_s.
    Returns:
        LossEvaluation: value, gradient (sur subset), hessian, probabilités.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    f = design.logits(np.asarray(z, dtype=np.float64))
    p = probabilities(f)
    gradient = design.transpose_dot(p - y, subset) / n
    block = None
    if hessian:
        columns = np.arange(design.n_columns) if subset is None else subset
        dense = design.dense_columns(columns)
        block = (dense.T * (p * (1.0 - p))) @ dense / n
    return LossEvaluation(logistic_loss(f, y), gradient, block, p)


def _first_order_point(z, gradient, alpha, lam, working_set, intercept):
    point = z.copy()
    target = z[working_set] - gradient[working_set] / alpha
    shrunk = np.sign(target) * np.maximum(np.abs(target) - lam / alpha, 0.0)
    free = working_set == intercept
    shrunk[free] = target[free]
    point[working_set] = shrunk
    return point


def first_order_step(z, gradient, alpha, lam, working_set=None, intercept=0):
    """
    Pas du premier ordre : minimise g'd + (α/2)|d|² + λ|z+d|₁ composante par composante.
    Args:
        z (array): Point courant.
        gradient (array): Gradient de L (de même longueur que z ; seules les entrées du working set sont lues).
        alpha (float): Amortissement α > 0.
        lam (float): λ.
        working_set (array, optional): Indices autorisés à bouger (tous par défaut).
        intercept (int): Indice de la constante, non pénalisée.
    Returns:
        array: d, nul hors du working set.
    """
    if alpha <= 0:
        raise ValueError(f"alpha doit être > 0, reçu {alpha}.")
    z = np.asarray(z, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    working_set = np.arange(len(z)) if working_set is None else np.asarray(working_set)
    return _first_order_point(z, gradient, alpha, lam, working_set, intercept) - z


def optimality_measure(z, gradient, lam, working_set=None, intercept=0):
    """
    δ(z) = min_{v ∈ ∂|z|₁} ‖∇L(z) + λ v‖, éventuellement restreint au working set.
    Returns:
        float: δ ≥ 0, nul exactement au minimum.
    """
    z = np.asarray(z, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    working_set = np.arange(len(z)) if working_set is None else np.asarray(working_set)
    g = gradient[working_set]
    zw = z[working_set]
    residual = np.where(zw != 0, g + lam * np.sign(zw), np.sign(g) * np.maximum(np.abs(g) - lam, 0.0))
    free = working_set == intercept
    residual[free] = g[free]
    return float(np.linalg.norm(residual))


def reduced_newton_step(design, y, z, inactive, w, lam, delta_z, damping=None, probs=None):
    """
    Pas de Newton restreint à l'ensemble inactif I_k.

    Résout (∇²_II L + δ_k I) p = -∇_I L - λ w_I avec δ_k = min(δ(z), diagonale
    moyenne du bloc), par factorisation de Cholesky.

    Args:
        design (DesignMatrix): Matrice de plan.
        y (array): Réponses.
        z (array): Point courant.
        inactive (array): Indices de I_k.
        w (array): Sous-gradient de |·|₁ en z+d sur I_k (0 pour la constante).
        lam (float): λ.
        delta_z (float): δ(z) courant.
        damping (float, optional): Impose δ_k (0 donne le pas de Newton exact).
        probs (array, optional): Probabilités en z si déjà calculées.
    Returns:
        tuple: (p_I, δ_k).
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if probs is None:
        probs = probabilities(design.logits(z))
    dense = design.dense_columns(inactive)
    weights = probs * (1.0 - probs)
    hess = (dense.T * weights) @ dense / n
    grad = dense.T @ (probs - y) / n
    if damping is None:
        damping = min(delta_z, float(np.mean(np.diag(hess))))
    system = hess + damping * np.eye(len(inactive))
    try:
        factor = cho_factor(system, lower=True, check_finite=False)
    except LinAlgError as e:
        raise SolverError(
            "Factorisation de Cholesky impossible pour le pas de Newton réduit.",
            diagnostics={
                "n_inactive": int(len(inactive)),
                "damping": float(damping),
                "delta": float(delta_z),
                "min_diag": float(np.min(np.diag(hess))) if len(inactive) else float("nan"),
            },
        ) from e
    return cho_solve(factor, -grad - lam * np.asarray(w, dtype=np.float64)), float(damping)


@dataclass(frozen=True, eq=False)
class ModelFit:
    """Solution pour un λ : coefficients creux, constante, diagnostics de convergence."""

    lam: float
    indices: np.ndarray
    values: np.ndarray
    mu: float
    neg_log_lik: float
    objective: float
    converged: bool
    delta_final: float
    iterations: int
    n_columns: int
    intercept_index: int = 0
    objective_trace: tuple = ()
    diagnostics: tuple = ()
    step_counts: dict = field(default_factory=dict)

    @property
    def support(self):
        return frozenset(int(j) for j in self.indices)

    @property
    def support_size(self):
        return len(self.indices)

    def coefficient_vector(self):
        z = np.zeros(self.n_columns)
        z[self.intercept_index] = self.mu
        z[self.indices] = self.values
        return z

    def to_pattern_model(self, design):
        terms = tuple((design.pattern_of_column(int(j)), float(v)) for j, v in zip(self.indices, self.values))
        return PatternModel(self.mu, terms)

    def to_dict(self):
        return {
            "lambda": self.lam,
            "mu": self.mu,
            "indices": [int(j) for j in self.indices],
            "values": [float(v) for v in self.values],
            "neg_log_lik": self.neg_log_lik,
            "objective": self.objective,
            "converged": self.converged,
            "delta_final": self.delta_final,
            "iterations": self.iterations,
            "n_columns": self.n_columns,
            "support_size": self.support_size,
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            lam=float(payload["lambda"]),
            indices=np.asarray(payload["indices"], dtype=np.intp),
            values=np.asarray(payload["values"], dtype=np.float64),
            mu=float(payload["mu"]),
            neg_log_lik=float(payload["neg_log_lik"]),
            objective=float(payload["objective"]),
            converged=bool(payload["converged"]),
            delta_final=float(payload["delta_final"]),
            iterations=int(payload["iterations"]),
            n_columns=int(payload["n_columns"]),
        )


def lambda_grid(lam_max, n_points=50, min_ratio=1e-4):
    """
    Grille log-espacée de λ_max à min_ratio·λ_max.
    Returns:
        numpy.ndarray: λ strictement décroissants ([0] si λ_max = 0).
    """
    if lam_max <= 0:
        return np.array([0.0])
    if n_points == 1:
        return np.array([float(lam_max)])
    return np.geomspace(lam_max, lam_max * min_ratio, n_points)


class PatternSearchSolver:
    """
    Solveur de T_λ sur une matrice de plan fixe.
    Args:
        design (DesignMatrix): Matrice de plan (constante non pénalisée).
        y (array): Réponses 0/1.
        config (SolverConfig, optional): Paramètres.
        on_iteration (callable, optional): Reçoit chaque ligne de diagnostic (dict).
    """

    def __init__(self, design, y, config=None, on_iteration=None):
        self.design = design
        self.y = np.asarray(y, dtype=np.float64)
        self.config = config or SolverConfig()
        self.on_iteration = on_iteration
        self.n = len(self.y)
        self.intercept = design.constant_column_index
        self.penalized = design.penalized_columns
        self.sigma = self.config.sampling_fraction(self.n, design.n_columns)

    def objective(self, z, lam, f=None):
        """T_λ(z) et les logits associés."""
        if f is None:
            f = self.design.logits(z)
        penalty = np.abs(z).sum() - abs(z[self.intercept])
        return logistic_loss(f, self.y) + lam * penalty, f

    def initial_point(self):
        z = np.zeros(self.design.n_columns)
        z[self.intercept] = intercept_mle(self.y)
        return z

    def lambda_max(self):
        """Plus petit λ pour lequel tous les coefficients pénalisés sont nuls (constante au MLE)."""
        if len(self.penalized) == 0:
            return 0.0
        p0 = probabilities(np.full(self.n, intercept_mle(self.y)))
        gradient = self.design.transpose_dot(p0 - self.y, self.penalized) / self.n
        return float(np.max(np.abs(gradient)))

    def _working_set(self, z, rng):
        size = max(1, int(math.ceil(self.sigma * len(self.penalized))))
        sampled = rng.choice(self.penalized, size=min(size, len(self.penalized)), replace=False)
        return np.union1d(np.union1d(sampled, np.flatnonzero(z)), [self.intercept]).astype(np.intp)

    def _gradient(self, probs, working_set):
        gradient = np.zeros(self.design.n_columns)
        residual = probs - self.y
        if working_set is None:
            gradient[:] = self.design.transpose_dot(residual) / self.n
        else:
            gradient[working_set] = self.design.transpose_dot(residual, working_set) / self.n
        return gradient

    def _sign_preserving_length(self, z, inactive, step):
        current = z[inactive]
        crossing = (current != 0) & (current * step < 0) & (inactive != self.intercept)
        if not crossing.any():
            return math.inf, np.array([], dtype=np.intp)
        ratios = -current[crossing] / step[crossing]
        gamma = float(ratios.min())
        return gamma, inactive[crossing][ratios == gamma]

    def solve(self, lam, warm_start=None):
        """
        Minimise T_λ depuis warm_start (ou z=0 avec μ au MLE).
        Args:
            lam (float): λ ≥ 0.
            warm_start (array, optional): Point de départ.
        Returns:
            ModelFit: Meilleur itéré, marqué non convergé si max_iters est atteint.
        """
        if lam < 0:
            raise ValueError(f"λ doit être ≥ 0, reçu {lam}.")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        z = self.initial_point() if warm_start is None else np.array(warm_start, dtype=np.float64)
        if z.shape != (self.design.n_columns,):
            raise ValueError(f"warm_start doit être de longueur {self.design.n_columns}.")
        alpha = cfg.alpha0
        value, f = self.objective(z, lam)
        probs = probabilities(f)
        trace = [value]
        rows = []
        counts = Counter()
        converged = False
        previous_below = False
        force_full = False
        iteration = 0

        for iteration in range(cfg.max_iters):
            full = self.sigma >= 1.0 or force_full
            working_set = None if full else self._working_set(z, rng)
            gradient = self._gradient(probs, working_set)
            delta = optimality_measure(z, gradient, lam, working_set, self.intercept)
            below = delta < cfg.tol or delta == 0.0
            if below and full and (self.sigma >= 1.0 or previous_below):
                converged = True
                break
            force_full = below
            previous_below = below

            ws = np.arange(len(z)) if working_set is None else working_set
            point = _first_order_point(z, gradient, alpha, lam, ws, self.intercept)
            value_fo, f_fo = self.objective(point, lam)
            first_order_ok = value_fo < value
            best = min(value_fo, value)

            inactive = np.union1d(np.flatnonzero(point), [self.intercept]).astype(np.intp)
            step_type = "rejected"
            accepted = None
            if len(inactive) <= cfg.newton_max_inactive:
                w = np.sign(point[inactive])
                w[inactive == self.intercept] = 0.0
                step, _ = reduced_newton_step(self.design, self.y, z, inactive, w, lam, delta, probs=probs)
                candidate = np.zeros_like(z)
                candidate[inactive] = z[inactive] + step
                value_nt, f_nt = self.objective(candidate, lam)
                if value_nt < best:
                    accepted, step_type = (candidate, value_nt, f_nt), "newton"
                else:
                    gamma, landing = self._sign_preserving_length(z, inactive, step)
                    if gamma < 1.0:
                        damped = np.zeros_like(z)
                        damped[inactive] = z[inactive] + gamma * step
                        damped[landing] = 0.0
                        value_dn, f_dn = self.objective(damped, lam)
                        if value_dn < best:
                            accepted, step_type = (damped, value_dn, f_dn), "damped_newton"
            if accepted is None and first_order_ok:
                accepted, step_type = (point, value_fo, f_fo), "first_order"
            if accepted is not None:
                z, value, f = accepted
                probs = probabilities(f)
            # α ne dépend que du succès du pas du premier ordre.
            alpha = alpha * cfg.eta if first_order_ok else alpha / cfg.eta
            alpha = min(max(alpha, ALPHA_BOUNDS[0]), ALPHA_BOUNDS[1])

            trace.append(value)
            counts[step_type] += 1
            row = {
                "iter": iteration,
                "objective": value,
                "delta": delta,
                "n_inactive": int(len(inactive)),
                "step_type": step_type,
            }
            if cfg.record_trace:
                rows.append(row)
            if self.on_iteration is not None:
                self.on_iteration(row)
            logger.debug(
                "λ=%.3g it=%d T=%.10g δ=%.3g |I|=%d %s", lam, iteration, value, delta, len(inactive), step_type
            )
        else:
            iteration = cfg.max_iters

        delta_final = optimality_measure(z, self._gradient(probs, None), lam, None, self.intercept)
        if not converged:
            logger.warning(
                "λ=%.4g : pas de convergence après %d itérations (δ=%.3g).", lam, cfg.max_iters, delta_final
            )
        support = np.flatnonzero(z)
        support = support[support != self.intercept]
        return ModelFit(
            lam=float(lam),
            indices=support.astype(np.intp),
            values=z[support].copy(),
            mu=float(z[self.intercept]),
            neg_log_lik=logistic_loss(f, self.y),
            objective=float(value),
            converged=converged,
            delta_final=delta_final,
            iterations=int(iteration),
            n_columns=self.design.n_columns,
            intercept_index=self.intercept,
            objective_trace=tuple(trace),
            diagnostics=tuple(rows),
            step_counts=dict(counts),
        )

    def solve_path(self, lambdas):
        """
        Résout pour une suite décroissante de λ avec démarrage à chaud.
        Args:
            lambdas (sequence[float]): λ strictement décroissants, ≥ 0.
        Returns:
            list[ModelFit]: Un ajustement par λ.
        """
        lambdas = np.asarray(lambdas, dtype=np.float64)
        if lambdas.ndim != 1 or len(lambdas) == 0:
            raise ValueError("La grille de λ doit être un vecteur non vide.")
        if np.any(lambdas < 0) or np.any(np.diff(lambdas) >= 0):
            raise ValueError("Les λ doivent être positifs et strictement décroissants.")
        fits = []
        warm = None
        for lam in lambdas:
            fit = self.solve(float(lam), warm)
            fits.append(fit)
            warm = fit.coefficient_vector()
        logger.info(
            "Chemin de %d λ résolu (%d non convergés).", len(fits), sum(not fit.converged for fit in fits)
        )
        return fits


def solve_single(design, y, lam, config=None, warm_start=None):
    """Raccourci : PatternSearchSolver(design, y, config).solve(lam, warm_start)."""
    return PatternSearchSolver(design, y, config).solve(lam, warm_start)


def solve_path(design, y, lambdas, config=None):
    """Raccourci : PatternSearchSolver(design, y, config).solve_path(lambdas)."""
    return PatternSearchSolver(design, y, config).solve_path(lambdas)
