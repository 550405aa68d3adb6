"""Étape 2 : régression logistique non pénalisée sur les motifs retenus et élimination descendante par BGACV."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr
from scipy.stats import norm

from patternsearch.core.patterns import CONSTANT_LABEL, PatternModel
from patternsearch.core.solver import logistic_loss, probabilities
from patternsearch.core.tuning import compute_H_trace
from patternsearch.exceptions import CollinearityError, LpsError, ScoringError

logger = logging.getLogger(__name__)

IRLS_TOL = 1e-10
IRLS_MAX_ITER = 100
STEP_TOL = 1e-8
SEPARATION_LOGIT = 30.0
CONFIDENCE_LEVEL = 0.90


@dataclass(frozen=True, eq=False)
class GlmFit:
    """Ajustement logistique : coefficient 0 = constante, puis un coefficient par motif."""

    names: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    deviance: float
    neg_log_lik: float
    converged: bool
    separation_flag: bool
    iterations: int
    gradient_norm: float
    patterns: tuple = ()

    @property
    def intercept(self):
        return float(self.coefficients[0])

    def to_pattern_model(self):
        return PatternModel(self.intercept, tuple(zip(self.patterns, (float(c) for c in self.coefficients[1:]))))

    def summary_rows(self):
        """Une ligne par coefficient : estimation, erreur type, p-valeur de Wald, IC à 90 %."""
        return [
            {
                "pattern": name,
                "coefficient": float(c),
                "std_error": float(se),
                "p_value": float(pv),
                "ci90_lower": float(lo),
                "ci90_upper": float(hi),
            }
            for name, c, se, pv, lo, hi in zip(
                self.names, self.coefficients, self.standard_errors, self.p_values, self.ci_lower, self.ci_upper
            )
        ]


def _first_dependent_column(X):
    """Indice de la première colonne combinaison linéaire des précédentes (une seule QR sans pivot), ou None."""
    if X.shape[1] == 0:
        return None
    n, k = X.shape
    diagonal = np.abs(np.diag(qr(X, mode="economic", check_finite=False)[1]))
    tolerance = max(n, k) * np.finfo(np.float64).eps * float(np.max(diagonal))
    dependent = np.flatnonzero(diagonal <= tolerance)
    if dependent.size:
        return int(dependent[0])
    # Au-delà de n colonnes, la colonne n dépend forcément des précédentes.
    return n if k > n else None


def fit_logistic_matrix(X, y, names=None, patterns=(), tol=IRLS_TOL, max_iter=IRLS_MAX_ITER):
    """
    Régression logistique par moindres carrés itérativement repondérés.
    Args:
        X (numpy.ndarray): Matrice n×k, première colonne = constante.
        y (array): Réponses 0/1.
        names (sequence[str], optional): Noms des colonnes (messages d'erreur et rapports).
        patterns (tuple, optional): Motifs des colonnes 1..k-1.
        tol (float): Tolérance relative sur la déviance.
        max_iter (int): Nombre maximal d'itérations.
    Returns:
        GlmFit: L'ajustement, avec separation_flag si max|f| > 30 pendant que la déviance décroît encore.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    names = tuple(names) if names is not None else tuple(f"c{j}" for j in range(k))
    dependent = _first_dependent_column(X)
    if dependent is not None:
        raise CollinearityError(
            f"Colonnes linéairement dépendantes : le motif {names[dependent]} est combinaison des précédents.",
            pattern=names[dependent],
        )

    beta = np.zeros(k)
    f = X @ beta
    deviance = 2.0 * n * logistic_loss(f, y)
    converged = False
    separation = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        p = probabilities(f)
        info = (X.T * (p * (1.0 - p))) @ X
        try:
            step = cho_solve(cho_factor(info, lower=True, check_finite=False), X.T @ (y - p))
        except LinAlgError:
            # Information numériquement nulle : poids écrasés par des logits extrêmes.
            separation = True
            break
        beta = beta + step
        f = X @ beta
        new_deviance = 2.0 * n * logistic_loss(f, y)
        falling = new_deviance < deviance
        change = abs(deviance - new_deviance)
        deviance = new_deviance
        if np.max(np.abs(f)) > SEPARATION_LOGIT and falling:
            separation = True
            break
        small_step = np.max(np.abs(step)) <= STEP_TOL * (1.0 + np.max(np.abs(beta)))
        if change <= tol * (abs(deviance) + 0.1) and small_step:
            converged = True
            break

    p = probabilities(f)
    gradient = X.T @ (y - p)
    info = (X.T * (p * (1.0 - p))) @ X
    try:
        covariance = cho_solve(cho_factor(info, lower=True, check_finite=False), np.eye(k))
        standard_errors = np.sqrt(np.maximum(np.diag(covariance), 0.0))
    except LinAlgError:
        standard_errors = np.full(k, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        wald = np.where(standard_errors > 0, beta / standard_errors, np.inf)
    p_values = 2.0 * norm.sf(np.abs(wald))
    half_width = norm.ppf(0.5 + CONFIDENCE_LEVEL / 2.0) * standard_errors
    if separation:
        label = ", ".join(names[1:]) or CONSTANT_LABEL
        logger.warning("Séparation (quasi-)complète détectée pour le modèle %s.", label)
    elif not converged:
        logger.warning("IRLS non convergé après %d itérations.", max_iter)
    return GlmFit(
        names=names,
        coefficients=beta,
        standard_errors=standard_errors,
        p_values=p_values,
        ci_lower=beta - half_width,
        ci_upper=beta + half_width,
        deviance=float(deviance),
        neg_log_lik=logistic_loss(f, y),
        converged=converged,
        separation_flag=separation,
        iterations=iteration,
        gradient_norm=float(np.linalg.norm(gradient)),
        patterns=tuple(patterns),
    )


def _basis(design, patterns):
    columns = [design.constant_column_index] + [design.column_of(p) for p in patterns]
    return design.dense_columns(columns)


def fit_logistic(design, y, patterns, var_names=None):
    """
    Ajuste μ + Σ c_ℓ B_ℓ sur les colonnes de `design` correspondant à `patterns`.
    Args:
        design (DesignMatrix): Matrice de plan contenant les motifs.
        y (array): Réponses.
        patterns (sequence[Pattern]): Motifs inclus (sans la constante).
        var_names (sequence[str], optional): Noms de variables pour les libellés.
    Returns:
        GlmFit: L'ajustement.
    """
    patterns = tuple(patterns)
    names = (CONSTANT_LABEL,) + tuple(p.label(var_names) for p in patterns)
    return fit_logistic_matrix(_basis(design, patterns), y, names, patterns)


def bgacv_parametric(fit, basis, y):
    """
    BGACV d'un ajustement paramétrique, H = B_s(B_s'WB_s)⁻¹B_s'.
    Args:
        fit (GlmFit): Ajustement convergé.
        basis (numpy.ndarray): B_s dense, constante en première colonne.
        y (array): Réponses.
    Returns:
        float: Le score.
    """
    if not fit.converged:
        raise ScoringError("BGACV paramétrique : l'ajustement n'a pas convergé.")
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    denominator = n - max(basis.shape[1] - 1, 1)
    if denominator <= 0:
        raise ScoringError(f"n={n} doit dépasser le nombre de motifs ({basis.shape[1] - 1}).")
    f = basis @ fit.coefficients
    p = probabilities(f)
    trace_h, _ = compute_H_trace(basis, p * (1.0 - p))
    gamma = trace_h * float(np.sum(y * (y - p))) / denominator
    return logistic_loss(f, y) + 0.5 * math.log(n) * gamma / n


@dataclass(frozen=True, eq=False)
class EliminationStage:
    index: int
    removed: Optional[object]
    bgacv: float
    remaining: tuple
    fit: Optional[GlmFit] = None
    candidate_scores: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class EliminationTrace:
    stages: tuple
    n_fits: int
    selected_stage: int

    def to_rows(self, var_names=None):
        return [
            {
                "stage": stage.index,
                "removed_pattern": "" if stage.removed is None else stage.removed.label(var_names),
                "bgacv": stage.bgacv,
                "remaining_patterns": ";".join(p.label(var_names) for p in stage.remaining),
            }
            for stage in self.stages
        ]


def _score_subset(design, y, patterns, var_names):
    try:
        fit = fit_logistic(design, y, patterns, var_names)
    except CollinearityError as e:
        logger.debug("Sous-modèle écarté (colinéarité) : %s", e)
        return math.inf, None
    if fit.separation_flag or not fit.converged:
        return math.inf, fit
    try:
        return bgacv_parametric(fit, _basis(design, patterns), y), fit
    except LpsError as e:
        logger.debug("Sous-modèle écarté : %s", e)
        return math.inf, fit


def _removal_key(item):
    pattern, (score, _) = item
    # À score égal : retirer d'abord le motif d'ordre le plus élevé, puis le dernier lexicographiquement.
    return score, -pattern.order, tuple(-i for i in pattern.indices)


def backward_eliminate(patterns, design, y, var_names=None, n_jobs=1):
    """
    Retire un motif à la fois, celui dont le retrait donne le plus petit BGACV, jusqu'au modèle constant.

    Le modèle final est l'étape de BGACV minimal sur tout le parcours (à égalité, la plus creuse).

    Args:
        patterns (sequence[Pattern]): Motifs retenus à l'étape 1.
        design (DesignMatrix): Matrice de plan contenant ces motifs.
        y (array): Réponses.
        var_names (sequence[str], optional): Noms de variables pour les libellés.
        n_jobs (int): Workers joblib pour les réajustements d'une étape.
    Returns:
        tuple: (PatternModel final, EliminationTrace, GlmFit final ; ajustement constant en dernier recours).
    """
    remaining = list(patterns)
    score, fit = _score_subset(design, y, remaining, var_names)
    n_fits = 1
    stages = [EliminationStage(0, None, score, tuple(remaining), fit)]
    logger.info("Élimination : modèle complet à %d motifs, BGACV=%.6f", len(remaining), score)

    while remaining:
        subsets = [[p for p in remaining if p != candidate] for candidate in remaining]
        if n_jobs == 1:
            results = [_score_subset(design, y, subset, var_names) for subset in subsets]
        else:
            results = Parallel(n_jobs=n_jobs, prefer="threads")(
                delayed(_score_subset)(design, y, subset, var_names) for subset in subsets
            )
        n_fits += len(subsets)
        candidates = list(zip(remaining, results))
        if all(math.isinf(score) for _, (score, _) in candidates):
            logger.warning("Étape %d : tous les réajustements ont échoué, arrêt de l'élimination.", len(stages))
            break
        removed, (score, fit) = min(candidates, key=_removal_key)
        remaining.remove(removed)
        stages.append(
            EliminationStage(
                index=len(stages),
                removed=removed,
                bgacv=score,
                remaining=tuple(remaining),
                fit=fit,
                candidate_scores={p.label(var_names): s for p, (s, _) in candidates},
            )
        )
        logger.info("Étape %d : retrait de %s, BGACV=%.6f", len(stages) - 1, removed.label(var_names), score)

    best = min(stages, key=lambda stage: (stage.bgacv, -stage.index))
    if math.isinf(best.bgacv):
        logger.warning("Aucune étape n'a pu être scorée : modèle le plus creux retenu.")
        best = stages[-1]
    trace = EliminationTrace(tuple(stages), n_fits, best.index)
    if best.fit is None:
        logger.warning("Aucun ajustement disponible à l'étape %d : repli sur le modèle constant.", best.index)
        fallback = fit_logistic_matrix(np.ones((len(y), 1)), y, [CONSTANT_LABEL])
        return fallback.to_pattern_model(), trace, fallback
    return best.fit.to_pattern_model(), trace, best.fit
