"""Scores GACV et BGACV d'un ajustement pénalisé et choix de λ le long d'un chemin."""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from patternsearch.core.patterns import DesignMatrix
from patternsearch.core.solver import PatternSearchSolver, logistic_loss, probabilities
from patternsearch.exceptions import ScoringError, SelectionError

logger = logging.getLogger(__name__)

CRITERIA = ("gacv", "bgacv")
RIDGE_FACTOR = 1e-10

SCORE_COLUMNS = ["lambda", "obs", "trace_H", "gamma", "gacv", "bgacv", "N_B0", "selected"]


@dataclass(frozen=True)
class ScoreRecord:
    lam: float
    obs: float
    trace_h: float
    gamma: float
    gacv: float
    bgacv: float
    support_size: int
    trace_wh: float
    basis_size: int

    def score(self, criterion):
        if criterion not in CRITERIA:
            raise ValueError(f"Critère inconnu : {criterion!r} (attendu : {', '.join(CRITERIA)}).")
        return self.gacv if criterion == "gacv" else self.bgacv

    def to_row(self, selected=False):
        return {
            "lambda": self.lam,
            "obs": self.obs,
            "trace_H": self.trace_h,
            "gamma": self.gamma,
            "gacv": self.gacv,
            "bgacv": self.bgacv,
            "N_B0": self.support_size,
            "selected": int(selected),
        }

    def to_dict(self):
        return asdict(self)


def compute_H_trace(basis, weights):
    """
    trace(H) pour H = B*(B*'WB*)⁻¹B*', sans former la matrice n×n.

    trace(H) = trace((B*'WB*)⁻¹ B*'B*). Si B*'WB* n'est pas définie positive
    numériquement, on ajoute 1e-10 fois sa diagonale moyenne.

    Args:
        basis (numpy.ndarray): B*, matrice dense n×k (constante incluse).
        weights (numpy.ndarray): Diagonale de W, p_i(1 - p_i).
    Returns:
        tuple: (trace(H), trace(WH)).
    """
    basis = np.asarray(basis, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != len(weights):
        raise ScoringError("B* et W ont des dimensions incompatibles.")
    u = (basis.T * weights) @ basis
    v = basis.T @ basis
    try:
        factor = cho_factor(u, lower=True, check_finite=False)
    except LinAlgError:
        ridge = RIDGE_FACTOR * float(np.mean(np.diag(u)))
        logger.warning("B*'WB* singulière (k=%d) : régularisation %.3g.", u.shape[0], ridge)
        try:
            factor = cho_factor(u + ridge * np.eye(u.shape[0]), lower=True, check_finite=False)
        except LinAlgError as e:
            raise ScoringError("B*'WB* reste singulière après régularisation.") from e
    trace_h = float(np.trace(cho_solve(factor, v)))
    trace_wh = float(np.trace(cho_solve(factor, u)))
    return trace_h, trace_wh


def score_fit(fit, design, y):
    """
    Calcule OBS, trace(H), γ, GACV et BGACV d'un ajustement.
    Args:
        fit (ModelFit): Ajustement convergé.
        design (DesignMatrix): Matrice de plan de l'ajustement.
        y (array): Réponses 0/1.
    Returns:
        ScoreRecord: Le score complet.
    """
    if not fit.converged:
        raise ScoringError(f"L'ajustement à λ={fit.lam:.4g} n'a pas convergé.")
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    support = fit.support_size
    denominator = n - max(support, 1)
    if denominator <= 0:
        raise ScoringError(f"n={n} doit dépasser N_B0={support} pour calculer le score.")
    columns = [design.constant_column_index] + [int(j) for j in fit.indices]
    basis = design.dense_columns(columns)
    f = basis @ np.concatenate(([fit.mu], fit.values))
    p = probabilities(f)
    obs = logistic_loss(f, y)
    trace_h, trace_wh = compute_H_trace(basis, p * (1.0 - p))
    gamma = trace_h * float(np.sum(y * (y - p))) / denominator
    return ScoreRecord(
        lam=fit.lam,
        obs=obs,
        trace_h=trace_h,
        gamma=gamma,
        gacv=obs + gamma / n,
        bgacv=obs + 0.5 * math.log(n) * gamma / n,
        support_size=support,
        trace_wh=trace_wh,
        basis_size=len(columns),
    )


def gacv(fit, design, y):
    """GACV(λ) = OBS + γ/n ; renvoie l'enregistrement complet."""
    return score_fit(fit, design, y)


def bgacv(fit, design, y):
    """BGACV(λ) = OBS + (log n / 2) γ/n ; renvoie l'enregistrement complet."""
    return score_fit(fit, design, y)


def score_path(path, design, y, n_jobs=1):
    """
    Score chaque ajustement du chemin ; les ajustements non convergés ou non scorables (N_B0 ≥ n) donnent None.
    Args:
        path (list[ModelFit]): Les ajustements.
        design (DesignMatrix): Matrice de plan.
        y (array): Réponses.
        n_jobs (int): Workers joblib (threads).
    Returns:
        list[ScoreRecord | None]: Un élément par ajustement.
    """

    def _score(fit):
        if not fit.converged:
            return None
        try:
            return score_fit(fit, design, y)
        except ScoringError as e:
            logger.warning("λ=%.4g ignoré : %s", fit.lam, e)
            return None

    if n_jobs == 1:
        return [_score(fit) for fit in path]
    return Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_score)(fit) for fit in path)


def select_lambda(path, design, y, criterion="bgacv", n_jobs=1, records=None):
    """
    Choisit le λ du chemin qui minimise le critère.
    Args:
        path (list[ModelFit]): Ajustements (ordre quelconque).
        design (DesignMatrix): Matrice de plan.
        y (array): Réponses.
        criterion (str): "gacv" ou "bgacv".
        n_jobs (int): Workers pour le calcul des scores.
        records (list, optional): Résultat de score_path déjà calculé pour ce chemin.
    Returns:
        tuple: (ModelFit choisi, liste des ScoreRecord des ajustements scorés).
    """
    if criterion not in CRITERIA:
        raise ValueError(f"Critère inconnu : {criterion!r} (attendu : {', '.join(CRITERIA)}).")
    if not path:
        raise SelectionError("Chemin vide : aucun λ à sélectionner.")
    if records is None:
        records = score_path(path, design, y, n_jobs)
    scored = []
    for fit, record in zip(path, records):
        if record is None:
            reason = "ajustement non convergé" if not fit.converged else "score indisponible"
            logger.warning("λ=%.4g ignoré : %s.", fit.lam, reason)
            continue
        scored.append((fit, record))
    if not scored:
        raise SelectionError("Aucun ajustement scorable : sélection de λ impossible.")
    # À score égal, le plus grand λ (modèle le plus creux) l'emporte.
    chosen, record = min(scored, key=lambda item: (item[1].score(criterion), -item[0].lam))
    logger.info(
        "%s : λ=%.4g retenu (N_B0=%d, score=%.6f).",
        criterion.upper(), chosen.lam, record.support_size, record.score(criterion),
    )
    return chosen, [r for _, r in scored]


def score_path_rows(records, selected_lambda=None):
    """Lignes CSV du chemin de scores, le λ retenu marqué selected=1."""
    return [record.to_row(selected=record.lam == selected_lambda) for record in records]


def exact_loo_cv(design, y, fit, config=None):
    """
    Validation croisée « leave-one-out » exacte par n réajustements.

    CV(λ) = (1/n) Σ [-y_i f^{[-i]}(x_i) + log(1 + e^{f(x_i)})], où f est
    l'ajustement complet et f^{[-i]} celui obtenu sans le sujet i, au même λ.

    Args:
        design (DesignMatrix): Matrice de plan complète.
        y (array): Réponses.
        fit (ModelFit): Ajustement sur toutes les données (sert de point de départ).
        config (SolverConfig, optional): Paramètres du solveur.
    Returns:
        float: CV(λ).
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    z_full = fit.coefficient_vector()
    f_full = design.logits(z_full)
    rows = design.matrix.tocsr()
    total = 0.0
    for i in range(n):
        keep = np.arange(n) != i
        reduced = DesignMatrix(rows[keep].tocsc(), design.patterns, design.constant_column_index)
        loo = PatternSearchSolver(reduced, y[keep], config).solve(fit.lam, z_full)
        f_i = float((rows[i].astype(np.float64) @ loo.coefficient_vector())[0])
        total += -y[i] * f_i + np.logaddexp(0.0, f_full[i])
    return total / n
