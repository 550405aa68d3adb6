"""Procédure complète : criblage optionnel, étape 1 (chemin pénalisé + BGACV), étape 2 (élimination)."""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, PositiveInt

from patternsearch.core.glm import backward_eliminate, fit_logistic_matrix
from patternsearch.core.patterns import (
    PatternModel,
    build_design,
    count_patterns,
    enumerate_patterns,
)
from patternsearch.core.solver import PatternSearchSolver, SolverConfig, lambda_grid
from patternsearch.core.tuning import score_path, score_path_rows, select_lambda
from patternsearch.exceptions import BudgetExceededError, CollinearityError, PatternArgumentError

logger = logging.getLogger(__name__)

AUTO_SCREENING_ABOVE = 30
POST_SELECTION_NOTE = "p-valeurs de Wald après sélection : non ajustées pour la sélection de modèle."


class LpsConfig(BaseModel):
    """Paramètres du pipeline ; `solver` regroupe ceux du solveur."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    solver: SolverConfig = Field(default_factory=SolverConfig)
    n_lambdas: PositiveInt = 50
    lambda_min_ratio: float = Field(1e-4, gt=0, lt=1)
    criterion: Literal["gacv", "bgacv"] = "bgacv"
    max_columns: PositiveInt = 2_000_000
    screening: Optional[bool] = None
    screening_alpha: float = Field(0.05, gt=0, lt=1)
    screening_correction: Literal["none", "bonferroni"] = "none"
    n_jobs: int = 1

    def screening_enabled(self, n_variables):
        if self.screening is not None:
            return self.screening
        return n_variables > AUTO_SCREENING_ABOVE


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    """Variables retenues par le criblage univarié (indices d'origine, ordre conservé)."""

    dataset: Optional[object]
    kept: tuple
    group_p_values: dict
    dropped_constant: tuple
    threshold: float = 0.05

    def to_dict(self):
        return {
            "kept": list(self.kept),
            "threshold": self.threshold,
            "group_min_p_values": self.group_p_values,
            "dropped_constant": list(self.dropped_constant),
        }


def _group_columns(data):
    groups = {}
    for j, group in enumerate(data.groups):
        groups.setdefault(group, []).append(j)
    return groups


def screen_variables(data, alpha=0.05, correction="none"):
    """
    Criblage : une régression logistique par variable source, les indicatrices d'un même groupe ensemble.
    Args:
        data (BinaryDataset): Les données.
        alpha (float): Seuil ; un groupe est gardé si l'une de ses p-valeurs est < alpha.
        correction (str): "bonferroni" divise alpha par le nombre de groupes, "none" le garde tel quel.
    Returns:
        ScreeningResult: Jeu réduit (None si rien n'est retenu) et détails.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha doit être dans ]0, 1[, reçu {alpha}.")
    if correction not in ("none", "bonferroni"):
        raise ValueError(f"Correction inconnue : {correction!r} (attendu : none, bonferroni).")
    X = data.X
    y = data.y
    n = data.n_samples
    kept = []
    dropped = []
    group_p = {}
    groups = _group_columns(data)
    threshold = alpha / len(groups) if correction == "bonferroni" else alpha
    for group, columns in groups.items():
        varying = []
        for j in columns:
            if X[:, j].min() == X[:, j].max():
                logger.warning("Variable constante %s ignorée au criblage.", data.var_names[j])
                dropped.append(data.var_names[j])
            else:
                varying.append(j)
        while varying:
            basis = np.column_stack([np.ones(n)] + [X[:, j] for j in varying])
            try:
                fit = fit_logistic_matrix(basis, y, ["constant"] + [data.var_names[j] for j in varying])
            except CollinearityError as e:
                varying = [j for j in varying if data.var_names[j] != e.pattern]
                continue
            if fit.separation_flag:
                group_p[group] = 0.0
                kept.extend(varying)
            else:
                group_p[group] = float(np.min(fit.p_values[1:]))
                if group_p[group] < threshold:
                    kept.extend(varying)
            break
    kept = tuple(sorted(kept))
    logger.info("Criblage : %d variables sur %d retenues (seuil=%.3g).", len(kept), data.n_variables, threshold)
    return ScreeningResult(
        dataset=data.select_variables(kept) if kept else None,
        kept=kept,
        group_p_values=group_p,
        dropped_constant=tuple(dropped),
        threshold=threshold,
    )


@dataclass(frozen=True, eq=False)
class Step1Result:
    criterion: str
    lam: float
    model: PatternModel
    fit: object

    def to_dict(self, var_names):
        return {
            "criterion": self.criterion,
            "lambda": self.lam,
            "support_size": len(self.model.terms),
            "model": self.model.to_dict(var_names),
        }


@dataclass(frozen=True, eq=False)
class LpsReport:
    """Résultats d'un passage complet ; tous les motifs sont exprimés en indices de variables d'origine."""

    dataset_digest: str
    var_names: tuple
    n_samples: int
    q: int
    q_effective: int
    config: LpsConfig
    n_columns: int
    lambda_max: float
    step1: Optional[Step1Result]
    step1_gacv: Optional[Step1Result]
    score_records: tuple
    final_model: PatternModel
    final_fit: Optional[object]
    elimination: Optional[object]
    screening: Optional[ScreeningResult]
    constant_response: bool
    timing: dict = field(default_factory=dict)

    @property
    def final_patterns(self):
        return self.final_model.patterns

    def score_rows(self):
        selected = self.step1.lam if self.step1 is not None else None
        return score_path_rows(self.score_records, selected)

    def elimination_rows(self):
        return [] if self.elimination is None else self.elimination.to_rows(self.var_names)

    def to_dict(self):
        names = self.var_names
        step2 = {
            "model": self.final_model.to_dict(names),
            "separation": bool(self.final_fit is not None and self.final_fit.separation_flag),
            "note": POST_SELECTION_NOTE,
        }
        if self.final_fit is not None:
            step2["coefficients"] = self.final_fit.summary_rows()
        return {
            "dataset_digest": self.dataset_digest,
            "n_samples": self.n_samples,
            "n_variables": len(names),
            "var_names": list(names),
            "q": self.q,
            "q_effective": self.q_effective,
            "config": self.config.model_dump(),
            "n_columns": self.n_columns,
            "lambda_max": self.lambda_max,
            "constant_response": self.constant_response,
            "screening": None if self.screening is None else self.screening.to_dict(),
            "step1": None if self.step1 is None else self.step1.to_dict(names),
            "step1_gacv": None if self.step1_gacv is None else self.step1_gacv.to_dict(names),
            "score_path": self.score_rows(),
            "step2": step2,
            "elimination_fits": None if self.elimination is None else self.elimination.n_fits,
            "timing": self.timing,
        }


def _remap_model(model, mapping):
    return PatternModel(model.intercept, tuple((p.remap(mapping), c) for p, c in model.terms))


def _constant_only_report(data, q, config, screening, started, constant_response):
    fit = fit_logistic_matrix(np.ones((data.n_samples, 1)), data.y, ["constant"])
    return LpsReport(
        dataset_digest=data.digest(),
        var_names=data.var_names,
        n_samples=data.n_samples,
        q=q,
        q_effective=0,
        config=config,
        n_columns=1,
        lambda_max=0.0,
        step1=None,
        step1_gacv=None,
        score_records=(),
        final_model=fit.to_pattern_model(),
        final_fit=fit,
        elimination=None,
        screening=screening,
        constant_response=constant_response,
        timing={"total": time.perf_counter() - started},
    )


def run_lps(data, q, config=None):
    """
    Exécute LASSO-Patternsearch sur un jeu binaire.
    Args:
        data (BinaryDataset): Les données.
        q (int): Ordre maximal des motifs.
        config (LpsConfig, optional): Paramètres du pipeline.
    Returns:
        LpsReport: Modèle de l'étape 1, chemin de scores, modèle final et traces.
    """
    config = config or LpsConfig()
    started = time.perf_counter()
    if isinstance(q, bool) or int(q) != q or not 1 <= q <= data.n_variables:
        raise PatternArgumentError(f"Il faut 1 ≤ q ≤ p={data.n_variables}, reçu q={q}.")
    q = int(q)

    if data.y.min() == data.y.max():
        logger.warning("Réponse constante : modèle constant seul, séparation signalée.")
        return _constant_only_report(data, q, config, None, started, True)

    working = data
    mapping = tuple(range(data.n_variables))
    screening = None
    if config.screening_enabled(data.n_variables):
        screening = screen_variables(data, config.screening_alpha, config.screening_correction)
        if screening.dataset is None:
            logger.warning("Aucune variable retenue par le criblage : modèle constant seul.")
            return _constant_only_report(data, q, config, screening, started, False)
        working = screening.dataset
        mapping = screening.kept

    q_effective = min(q, working.n_variables)
    if q_effective < q:
        logger.info("q ramené de %d à %d (variables restantes).", q, q_effective)
    n_columns = count_patterns(working.n_variables, q_effective, include_constant=True)
    if n_columns > config.max_columns:
        raise BudgetExceededError(
            f"{n_columns} fonctions de base pour p={working.n_variables}, q={q_effective} "
            f"(budget {config.max_columns}). Réduire q ou activer le criblage."
        )

    design = build_design(working, enumerate_patterns(working.n_variables, q_effective))
    y = working.y
    solver = PatternSearchSolver(design, y, config.solver)
    lam_max = solver.lambda_max()
    path = solver.solve_path(lambda_grid(lam_max, config.n_lambdas, config.lambda_min_ratio))
    records = score_path(path, design, y, config.n_jobs)
    step1_time = time.perf_counter() - started

    step1 = {}
    for criterion in ("gacv", "bgacv"):
        chosen, _ = select_lambda(path, design, y, criterion, records=records)
        step1[criterion] = Step1Result(
            criterion, chosen.lam, _remap_model(chosen.to_pattern_model(design), mapping), chosen
        )
    selected = step1[config.criterion]
    survivors = [design.pattern_of_column(int(j)) for j in selected.fit.indices]

    final_model, trace, final_fit = backward_eliminate(
        survivors, design, y, var_names=working.var_names, n_jobs=config.n_jobs
    )
    elapsed = time.perf_counter() - started
    logger.info(
        "LPS : %d motifs à l'étape 1, %d dans le modèle final (%.1f s).",
        len(survivors), len(final_model.terms), elapsed,
    )
    return LpsReport(
        dataset_digest=data.digest(),
        var_names=data.var_names,
        n_samples=data.n_samples,
        q=q,
        q_effective=q_effective,
        config=config,
        n_columns=design.n_columns,
        lambda_max=lam_max,
        step1=selected,
        step1_gacv=step1["gacv"],
        score_records=tuple(r for r in records if r is not None),
        final_model=_remap_model(final_model, mapping),
        final_fit=final_fit,
        elimination=trace,
        screening=screening,
        constant_response=False,
        timing={"step1": step1_time, "step2": elapsed - step1_time, "total": elapsed},
    )


@dataclass(frozen=True)
class ScrambleTable:
    """Motifs découverts sur réponses permutées, par passage et par ordre."""

    runs: tuple
    by_order: dict

    @property
    def total(self):
        return sum(self.by_order.values())

    def to_rows(self):
        return [{"order": order, "count": count} for order, count in sorted(self.by_order.items())]

    def run_rows(self):
        return [{"run": i, "patterns": ";".join(labels)} for i, labels in enumerate(self.runs)]


def _scrambled_run(data, q, config, seed_sequence):
    report = run_lps(data.permuted(np.random.default_rng(seed_sequence)), q, config)
    return report.final_patterns


def scramble_study(data, q, config=None, reps=1, seed=0, n_jobs=None):
    """
    Permute la réponse `reps` fois, relance LPS et compte les motifs (tous faux) découverts.
    Args:
        data (BinaryDataset): Les données.
        q (int): Ordre maximal.
        config (LpsConfig, optional): Paramètres du pipeline.
        reps (int): Nombre de permutations (≥ 1).
        seed (int): Graine ; chaque passage a son propre flux dérivé.
        n_jobs (int, optional): Workers joblib (défaut : config.n_jobs).
    Returns:
        ScrambleTable: Les motifs par passage et le décompte par ordre.
    """
    if reps < 1:
        raise ValueError(f"reps doit être ≥ 1, reçu {reps}.")
    config = config or LpsConfig()
    n_jobs = config.n_jobs if n_jobs is None else n_jobs
    streams = np.random.SeedSequence(seed).spawn(reps)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_scrambled_run)(data, q, config, stream) for stream in streams
    )
    counts = Counter(p.order for patterns in results for p in patterns)
    runs = tuple(tuple(p.label(data.var_names) for p in patterns) for patterns in results)
    logger.info("Permutations : %d passages, %d motifs découverts.", reps, sum(counts.values()))
    return ScrambleTable(runs, dict(counts))
