"""Générateurs simulés (exemples 1 à 3, modèle génératif de type GAW) et harnais de réplication."""

import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, PositiveInt
from scipy.special import expit

from patternsearch.core.patterns import BinaryDataset, Pattern, PatternModel
from patternsearch.core.pipeline import run_lps

logger = logging.getLogger(__name__)

GAW_ENVIRONMENT = ("age", "sex", "smoking")
GAW_CONSTANT = -4.8546
# (termes, coefficient) ; les SNP sont désignés par (numéro, nombre d'allèles variants).
GAW_TERMS = (
    (("smoking",), 0.8603),
    (((153, 1),), 1.8911),
    (((162, 1),), 2.2013),
    (((154, 2),), 0.7700),
    (("sex", (153, 1)), 0.7848),
    (("sex", (154, 2)), 0.9330),
    (((153, 2), (154, 2)), 4.5877),
    (((153, 1), (553, 2)), 0.4021),
    (((154, 2), (490, 1)), 0.3888),
    (("sex", (108, 2), (334, 2)), 3.0),
)


def snp_name(snp, level):
    return f"SNP6_{snp}_{level}"


def _correlated_normals(rng, n, dim, rho, mean=0.0):
    """Vecteurs normaux de variance 1, corrélation deux à deux rho, par Cholesky."""
    covariance = np.full((dim, dim), rho) + (1.0 - rho) * np.eye(dim)
    factor = np.linalg.cholesky(covariance)
    return mean + rng.standard_normal((n, dim)) @ factor.T


def _draw_response(rng, model, X):
    return (rng.random(X.shape[0]) < expit(model.evaluate_matrix(X))).astype(np.int8)


def _copy_or_fresh(rng, source, rho, p_fresh):
    keep = rng.random(source.shape) < rho
    fresh = (rng.random(source.shape) < p_fresh).astype(np.int8)
    return np.where(keep, source, fresh).astype(np.int8)


def example1_model():
    return PatternModel(-2.0, ((Pattern.of(1), 1.5), (Pattern.of(2, 3), 1.5), (Pattern.of(4, 5, 6), 2.0)))


def example2_model():
    return PatternModel(-2.0, ((Pattern.of(1, 2, 3, 4), 2.0),))


def example3_model():
    return PatternModel(-2.0, ((Pattern.of(9), 2.0), (Pattern.of(6, 7), 2.0), (Pattern.of(1, 2, 3, 4), 2.0)))


def gen_example1(n=800, seed=0):
    """
    Exemple 1 : f(x) = -2 + 1.5 B1 + 1.5 B23 + 2 B456 sur 7 variables.

    (X1*, X4*), (X2*, X5*), (X3*, X6*) sont des couples normaux centrés réduits
    de covariance 0.7 seuillés en 0 ; X7 suit une Bernoulli(0.5).

    Args:
        n (int): Taille de l'échantillon.
        seed (int | numpy.random.SeedSequence): Graine.
    Returns:
        tuple: (BinaryDataset, PatternModel vrai).
    """
    rng = np.random.default_rng(seed)
    X = np.zeros((n, 7), dtype=np.int8)
    for first, second in ((0, 3), (1, 4), (2, 5)):
        latent = _correlated_normals(rng, n, 2, 0.7)
        X[:, first] = latent[:, 0] > 0
        X[:, second] = latent[:, 1] > 0
    X[:, 6] = rng.random(n) < 0.5
    model = example1_model()
    return BinaryDataset(X, _draw_response(rng, model, X)), model


def gen_example2(n=2000, rho=0.0, seed=0):
    """
    Exemple 2 : f(x) = -2 + 2 B1234 sur 8 variables.
    Args:
        n (int): Taille de l'échantillon.
        rho (float): Probabilité que X_{i+4} recopie X_i (sinon Bernoulli(0.84)).
        seed (int | numpy.random.SeedSequence): Graine.
    Returns:
        tuple: (BinaryDataset, PatternModel vrai).
    """
    if not 0 <= rho <= 1:
        raise ValueError(f"rho doit être dans [0, 1], reçu {rho}.")
    rng = np.random.default_rng(seed)
    core = (_correlated_normals(rng, n, 4, 0.7, mean=1.0) > 0).astype(np.int8)
    X = np.hstack([core, _copy_or_fresh(rng, core, rho, 0.84)])
    model = example2_model()
    return BinaryDataset(X, _draw_response(rng, model, X)), model


def gen_example3(n=2000, rho1=0.2, rho2=0.2, seed=0):
    """
    Exemple 3 : f(x) = -2 + 2 B9 + 2 B67 + 2 B1234 sur 20 variables.
    Args:
        n (int): Taille de l'échantillon.
        rho1 (float): Corrélation deux à deux des normales latentes de X1..X4 (dans [0, 1[).
        rho2 (float): Probabilité de recopie de X1..X4 dans X5..X8.
        seed (int | numpy.random.SeedSequence): Graine.
    Returns:
        tuple: (BinaryDataset, PatternModel vrai).
    """
    if not 0 <= rho1 < 1:
        raise ValueError(f"rho1 doit être dans [0, 1[, reçu {rho1}.")
    if not 0 <= rho2 <= 1:
        raise ValueError(f"rho2 doit être dans [0, 1], reçu {rho2}.")
    rng = np.random.default_rng(seed)
    core = (_correlated_normals(rng, n, 4, rho1, mean=1.0) > 0).astype(np.int8)
    copies = _copy_or_fresh(rng, core, rho2, 0.84)
    noise = (rng.random((n, 12)) < 0.5).astype(np.int8)
    X = np.hstack([core, copies, noise])
    model = example3_model()
    return BinaryDataset(X, _draw_response(rng, model, X)), model


class GawSettings(BaseModel):
    """Fréquences marginales du générateur de type GAW (valeurs de substitution)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_snps: PositiveInt = 674
    variant_frequencies: tuple = (0.25, 0.05)
    causal_frequencies: tuple = (0.40, 0.25)
    environment_frequencies: dict = Field(default_factory=lambda: {"age": 0.5, "sex": 0.5, "smoking": 0.3})


def _gaw_causal_snps():
    return sorted({item[0] for terms, _ in GAW_TERMS for item in terms if isinstance(item, tuple)})


def gaw_variable_names(n_snps=674):
    names = list(GAW_ENVIRONMENT)
    for snp in range(1, n_snps + 1):
        names.extend((snp_name(snp, 1), snp_name(snp, 2)))
    return names


def gaw_true_model(var_names):
    """Modèle génératif : effets publiés du jeu de type GAW plus le motif d'ordre 3 de coefficient 3."""
    position = {name: j for j, name in enumerate(var_names)}
    terms = []
    for items, coefficient in GAW_TERMS:
        labels = [item if isinstance(item, str) else snp_name(*item) for item in items]
        terms.append((Pattern(tuple(sorted(position[label] for label in labels))), coefficient))
    return PatternModel(GAW_CONSTANT, tuple(terms))


def gen_gaw_style(n=3500, seed=0, settings=None):
    """
    Données de type GAW : 3 variables d'environnement et deux indicatrices par SNP.
    Args:
        n (int): Nombre de sujets.
        seed (int | numpy.random.SeedSequence): Graine.
        settings (GawSettings, optional): Fréquences marginales.
    Returns:
        tuple: (BinaryDataset avec groupes par SNP, PatternModel vrai).
    """
    settings = settings or GawSettings()
    causal = _gaw_causal_snps()
    if settings.n_snps < max(causal):
        raise ValueError(f"n_snps doit être ≥ {max(causal)} pour contenir les SNP du modèle.")
    rng = np.random.default_rng(seed)
    names = gaw_variable_names(settings.n_snps)
    X = np.zeros((n, len(names)), dtype=np.int8)
    for j, variable in enumerate(GAW_ENVIRONMENT):
        X[:, j] = rng.random(n) < settings.environment_frequencies[variable]
    causal_set = set(causal)
    for snp in range(1, settings.n_snps + 1):
        f1, f2 = settings.causal_frequencies if snp in causal_set else settings.variant_frequencies
        genotype = rng.choice(3, size=n, p=(1.0 - f1 - f2, f1, f2))
        column = len(GAW_ENVIRONMENT) + 2 * (snp - 1)
        X[:, column] = genotype == 1
        X[:, column + 1] = genotype == 2
    model = gaw_true_model(names)
    groups = list(GAW_ENVIRONMENT) + [f"SNP6_{snp}" for snp in range(1, settings.n_snps + 1) for _ in (1, 2)]
    notes = ["age ≥ 55", "féminin", "fumeur"] + ["allèle(s) variant(s)"] * (2 * settings.n_snps)
    data = BinaryDataset(X, _draw_response(rng, model, X), tuple(names), tuple(notes), tuple(groups))
    return data, model


class SimSpec(BaseModel):
    """Scénario simulé ; les paramètres non utilisés par l'exemple sont ignorés."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    example: Literal["ex1", "ex2", "ex3", "gaw"]
    n: Optional[PositiveInt] = None
    rho: float = Field(0.0, ge=0, le=1)
    rho1: float = Field(0.2, ge=0, lt=1)
    rho2: float = Field(0.2, ge=0, le=1)
    seed: int = 0
    gaw: GawSettings = Field(default_factory=GawSettings)

    @property
    def default_q(self):
        return {"ex1": 7, "ex2": 8, "ex3": 4, "gaw": 3}[self.example]

    def generate(self, seed=None):
        seed = self.seed if seed is None else seed
        if self.example == "ex1":
            return gen_example1(self.n or 800, seed)
        if self.example == "ex2":
            return gen_example2(self.n or 2000, self.rho, seed)
        if self.example == "ex3":
            return gen_example3(self.n or 2000, self.rho1, self.rho2, seed)
        return gen_gaw_style(self.n or 3500, seed, self.gaw)


@dataclass(frozen=True)
class FrequencyTable:
    """Fréquences d'apparition des motifs vrais (correspondance exacte) et total des motifs parasites."""

    true_patterns: tuple
    counts: dict
    noise: dict
    reps: int

    def to_rows(self):
        rows = []
        for method, detected in self.counts.items():
            row = {"method": method}
            row.update(detected)
            row["noise"] = self.noise[method]
            rows.append(row)
        return rows

    def columns(self):
        return ["method", *self.true_patterns, "noise"]


def _tally(found, true_patterns):
    found = set(found)
    detected = {p: int(p in found) for p in true_patterns}
    return detected, len(found - set(true_patterns))


def _replicate_once(spec, seed_sequence, q, config):
    data, model = spec.generate(seed_sequence)
    report = run_lps(data, q, config)
    found = {
        "GACV": report.step1_gacv.model.patterns if report.step1_gacv else (),
        "BGACV": report.step1.model.patterns if report.step1 else (),
        "LPS": report.final_model.patterns,
    }
    return {method: _tally(patterns, model.patterns) for method, patterns in found.items()}, model


def replicate(spec, reps, config=None, q=None, n_jobs=1):
    """
    Relance le pipeline sur `reps` jeux simulés indépendants et compte les détections.
    Args:
        spec (SimSpec): Le scénario.
        reps (int): Nombre de répétitions (≥ 1).
        config (LpsConfig, optional): Paramètres du pipeline.
        q (int, optional): Ordre maximal (défaut propre à l'exemple).
        n_jobs (int): Workers joblib ; chaque répétition a son flux aléatoire.
    Returns:
        FrequencyTable: Lignes GACV, BGACV (étape 1) et LPS (modèle final).
    """
    if reps < 1:
        raise ValueError(f"reps doit être ≥ 1, reçu {reps}.")
    q = q or spec.default_q
    streams = np.random.SeedSequence(spec.seed).spawn(reps)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_replicate_once)(spec, stream, q, config) for stream in streams
    )
    model = results[0][1]
    labels = {p: p.label() for p in model.patterns}
    if spec.example == "gaw":
        names = gaw_variable_names(spec.gaw.n_snps)
        labels = {p: p.label(names) for p in model.patterns}
    counts = {}
    noise = {}
    for method in ("GACV", "BGACV", "LPS"):
        counts[method] = {labels[p]: sum(r[method][0][p] for r, _ in results) for p in model.patterns}
        noise[method] = sum(r[method][1] for r, _ in results)
    logger.info("Réplication %s : %d répétitions, LPS=%s, bruit=%d", spec.example, reps, counts["LPS"], noise["LPS"])
    return FrequencyTable(tuple(labels[p] for p in model.patterns), counts, noise, reps)
