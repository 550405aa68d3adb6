"""Motifs booléens (monômes ET) sur des attributs binaires.

Les indices de variables sont stockés à partir de 0 ; les rapports les
affichent par nom de variable ("pky×vtm") ou, à défaut, sous la forme x1, x2...
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from patternsearch.exceptions import DatasetError, PatternArgumentError

logger = logging.getLogger(__name__)

CONSTANT_LABEL = "constant"
PATTERN_SEPARATOR = "×"
FLIP_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Pattern:
    """Fonction de base B_{j1..jr}(x) = x_{j1} ... x_{jr}; le motif vide est la constante."""

    indices: tuple = ()

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise PatternArgumentError(f"Indices de variable négatifs : {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise PatternArgumentError(f"Les indices d'un motif doivent être strictement croissants : {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, *one_based):
        """Construit un motif à partir d'indices numérotés à partir de 1 (B_{2,3} -> Pattern.of(2, 3))."""
        return cls(tuple(i - 1 for i in one_based))

    @property
    def order(self):
        return len(self.indices)

    @property
    def is_constant(self):
        return not self.indices

    def sort_key(self):
        return (self.order, self.indices)

    def one_based(self):
        return tuple(i + 1 for i in self.indices)

    def label(self, var_names=None):
        """
        Libellé lisible du motif.
        Args:
            var_names (sequence, optional): Noms des variables.
        Returns:
            str: "constant", ou les noms joints par "×".
        """
        if self.is_constant:
            return CONSTANT_LABEL
        if var_names is None:
            return PATTERN_SEPARATOR.join(f"x{i + 1}" for i in self.indices)
        return PATTERN_SEPARATOR.join(var_names[i] for i in self.indices)

    def is_satisfied_by(self, x):
        return all(x[i] == 1 for i in self.indices)

    def remap(self, mapping):
        """Renumérote les variables (mapping[i] = nouvel indice de la variable i)."""
        return Pattern(tuple(sorted(int(mapping[i]) for i in self.indices)))

    def __str__(self):
        return self.label()


def parse_pattern(label, var_names):
    """
    Relit un libellé produit par Pattern.label.
    Args:
        label (str): Libellé ("constant" ou "a×b").
        var_names (sequence): Noms des variables.
    Returns:
        Pattern: Le motif correspondant.
    """
    if label == CONSTANT_LABEL:
        return Pattern(())
    position = {name: i for i, name in enumerate(var_names)}
    try:
        return Pattern(tuple(sorted(position[name] for name in label.split(PATTERN_SEPARATOR))))
    except KeyError as e:
        raise PatternArgumentError(f"Variable inconnue dans le motif {label!r} : {e}") from e


def _readonly(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """Matrice n×p d'attributs 0/1 et réponse binaire de longueur n."""

    X: np.ndarray
    y: np.ndarray
    var_names: tuple = ()
    coding_notes: tuple = ()
    groups: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.X)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise DatasetError(f"X doit être une matrice, reçu {X.ndim} dimension(s).")
        n, p = X.shape
        if n < 1 or p < 1:
            raise DatasetError(f"Il faut n ≥ 1 et p ≥ 1, reçu n={n}, p={p}.")
        if y.shape != (n,):
            raise DatasetError(f"y doit être de longueur {n}, reçu la forme {y.shape}.")
        for name, values in (("X", X), ("y", y)):
            if values.dtype.kind == "f" and np.isnan(values).any():
                raise DatasetError(f"Valeurs manquantes dans {name} : elles doivent être retirées à l'ingestion.")
            if not np.isin(values, (0, 1)).all():
                raise DatasetError(f"{name} ne doit contenir que des 0 et des 1.")
        var_names = tuple(self.var_names) or tuple(f"x{j + 1}" for j in range(p))
        coding_notes = tuple(self.coding_notes) or ("",) * p
        groups = tuple(self.groups) or var_names
        for label, values in (("var_names", var_names), ("coding_notes", coding_notes), ("groups", groups)):
            if len(values) != p:
                raise DatasetError(f"{label} doit contenir {p} entrées, reçu {len(values)}.")
        if len(set(var_names)) != p:
            raise DatasetError("Les noms de variables doivent être uniques.")
        object.__setattr__(self, "X", _readonly(X.astype(np.int8)))
        object.__setattr__(self, "y", _readonly(y.astype(np.int8)))
        object.__setattr__(self, "var_names", var_names)
        object.__setattr__(self, "coding_notes", coding_notes)
        object.__setattr__(self, "groups", groups)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_variables(self):
        return self.X.shape[1]

    @property
    def incidence(self):
        return float(self.y.mean())

    def digest(self):
        """Empreinte SHA-256 des données (provenance des rapports)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        h.update("\x1f".join(self.var_names).encode("utf-8"))
        return h.hexdigest()

    def with_response(self, y):
        return BinaryDataset(self.X, y, self.var_names, self.coding_notes, self.groups)

    def permuted(self, rng):
        """Copie dont la réponse est permutée ; la permutation identité est retirée si n > 1."""
        n = self.n_samples
        permutation = rng.permutation(n)
        while n > 1 and np.array_equal(permutation, np.arange(n)):
            permutation = rng.permutation(n)
        return self.with_response(self.y[permutation])

    def select_variables(self, columns):
        """Sous-ensemble de colonnes, dans l'ordre donné."""
        columns = list(columns)
        return BinaryDataset(
            self.X[:, columns],
            self.y,
            tuple(self.var_names[j] for j in columns),
            tuple(self.coding_notes[j] for j in columns),
            tuple(self.groups[j] for j in columns),
        )

    def same_data(self, other):
        return (
            self.var_names == other.var_names
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Matrice de plan creuse par colonnes : une colonne 0/1 par motif, la constante en premier."""

    matrix: sp.csc_matrix
    patterns: tuple
    constant_column_index: int = 0
    _column_of: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.matrix.shape[1] != len(self.patterns):
            raise PatternArgumentError("Une colonne par motif est requise.")
        column_of = {pattern: j for j, pattern in enumerate(self.patterns)}
        if len(column_of) != len(self.patterns):
            raise PatternArgumentError("Motifs dupliqués dans la matrice de plan.")
        object.__setattr__(self, "_column_of", column_of)

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    @property
    def n_columns(self):
        return self.matrix.shape[1]

    @property
    def penalized_columns(self):
        return np.array([j for j in range(self.n_columns) if j != self.constant_column_index], dtype=np.intp)

    @cached_property
    def float_matrix(self):
        """Copie flottante utilisée pour les contractions du solveur."""
        return self.matrix.astype(np.float64)

    @cached_property
    def rows_by_pattern(self):
        """Transposée CSR (N_B × n) : un sous-ensemble de colonnes devient une extraction de lignes."""
        return self.float_matrix.T.tocsr()

    def pattern_of_column(self, j):
        return self.patterns[j]

    def column_of(self, pattern):
        try:
            return self._column_of[pattern]
        except KeyError as e:
            raise PatternArgumentError(f"Motif absent de la matrice de plan : {pattern}") from e

    def column_rows(self, j):
        m = self.matrix
        return m.indices[m.indptr[j]:m.indptr[j + 1]]

    def logits(self, z):
        """f = B z en n'utilisant que les colonnes non nulles de z."""
        nonzero = np.flatnonzero(z)
        if len(nonzero) == 0:
            return np.zeros(self.n_rows)
        if 2 * len(nonzero) > self.n_columns:
            return self.float_matrix @ z
        return self.rows_by_pattern[nonzero].T @ z[nonzero]

    def transpose_dot(self, v, columns=None):
        """B' v, éventuellement restreint à un sous-ensemble de colonnes."""
        if columns is None:
            return self.rows_by_pattern @ v
        return self.rows_by_pattern[columns] @ v

    def dense_columns(self, columns):
        return self.rows_by_pattern[columns].toarray().T


def count_patterns(p, q, include_constant=False):
    """
    Nombre de motifs d'ordre 1..q sur p variables.
    Args:
        p (int): Nombre de variables.
        q (int): Ordre maximal.
        include_constant (bool): Compter aussi la constante.
    Returns:
        int: Somme des C(p, ν) pour ν = 1..q (ou 0..q).
    """
    start = 0 if include_constant else 1
    return sum(math.comb(p, nu) for nu in range(start, q + 1))


def _check_order(p, q):
    if isinstance(p, bool) or isinstance(q, bool) or int(p) != p or int(q) != q:
        raise PatternArgumentError(f"p et q doivent être entiers, reçu p={p!r}, q={q!r}.")
    if q < 1 or q > p:
        raise PatternArgumentError(f"Il faut 1 ≤ q ≤ p, reçu p={p}, q={q}.")


def enumerate_patterns(p, q):
    """
    Énumère tous les motifs non constants d'ordre au plus q.
    Args:
        p (int): Nombre de variables.
        q (int): Ordre maximal (1 ≤ q ≤ p).
    Returns:
        list[Pattern]: Motifs triés par ordre puis lexicographiquement.
    """
    _check_order(p, q)
    return [Pattern(c) for r in range(1, q + 1) for c in itertools.combinations(range(p), r)]


def build_design(data, patterns):
    """
    Évalue les motifs sur les sujets et construit la matrice de plan.
    Args:
        data (BinaryDataset): Les données.
        patterns (sequence[Pattern]): Motifs non constants, dans l'ordre voulu.
    Returns:
        DesignMatrix: Colonne 0 = constante, puis une colonne par motif.
    """
    X = data.X
    n, p = X.shape
    variable_rows = [np.flatnonzero(X[:, j]) for j in range(p)]
    chunks = [np.arange(n, dtype=np.int32)]
    for pattern in patterns:
        if pattern.is_constant:
            raise PatternArgumentError("La constante est ajoutée automatiquement ; ne pas la passer en motif.")
        if pattern.indices[-1] >= p:
            raise PatternArgumentError(f"Le motif {pattern} dépasse le nombre de variables p={p}.")
        rows = variable_rows[pattern.indices[0]]
        for j in pattern.indices[1:]:
            rows = rows[X[rows, j] == 1]
        chunks.append(rows.astype(np.int32))
    lengths = np.fromiter((len(c) for c in chunks), dtype=np.int64, count=len(chunks))
    indptr = np.concatenate(([0], np.cumsum(lengths)))
    indices = np.concatenate(chunks)
    matrix = sp.csc_matrix(
        (np.ones(len(indices), dtype=np.int8), indices, indptr), shape=(n, len(chunks))
    )
    logger.debug("Matrice de plan : n=%d, N_B=%d, nnz=%d", n, matrix.shape[1], matrix.nnz)
    return DesignMatrix(matrix, (Pattern(()),) + tuple(patterns), 0)


@dataclass(frozen=True, eq=False)
class PatternModel:
    """Logit f(x) = μ + Σ c_ℓ B_ℓ(x)."""

    intercept: float = 0.0
    terms: tuple = ()

    def __post_init__(self):
        terms = tuple((p if isinstance(p, Pattern) else Pattern(tuple(p)), float(c)) for p, c in self.terms)
        patterns = [p for p, _ in terms]
        if any(p.is_constant for p in patterns):
            raise PatternArgumentError("La constante se donne via intercept, pas comme terme.")
        if len(set(patterns)) != len(patterns):
            raise PatternArgumentError("Motifs dupliqués dans le modèle.")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "terms", terms)

    @property
    def patterns(self):
        return tuple(p for p, _ in self.terms)

    def coefficients(self):
        return dict(self.terms)

    def max_variable_index(self):
        return max((p.indices[-1] for p in self.patterns), default=-1)

    def evaluate(self, x):
        return self.intercept + sum(c for p, c in self.terms if p.is_satisfied_by(x))

    def evaluate_matrix(self, X):
        """Logits de toutes les lignes de X."""
        X = np.asarray(X)
        f = np.full(X.shape[0], self.intercept)
        for pattern, c in self.terms:
            f += c * np.all(X[:, list(pattern.indices)] == 1, axis=1)
        return f

    def describe(self, var_names=None):
        rows = [(CONSTANT_LABEL, self.intercept)]
        rows.extend((p.label(var_names), c) for p, c in self.terms)
        return rows

    def to_dict(self, var_names=None):
        return {
            "intercept": self.intercept,
            "terms": [
                {"pattern": p.label(var_names), "indices": list(p.one_based()), "coefficient": c}
                for p, c in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, payload):
        terms = [(Pattern.of(*t["indices"]), t["coefficient"]) for t in payload.get("terms", [])]
        return cls(payload.get("intercept", 0.0), tuple(terms))


def evaluate_model(m, x, n_variables):
    """
    Logit du modèle en un point binaire.
    Args:
        m (PatternModel): Le modèle.
        x (sequence): Vecteur d'attributs 0/1.
        n_variables (int): p du jeu de données ; une longueur différente est refusée.
    Returns:
        float: μ + somme des coefficients des motifs satisfaits.
    """
    x = np.asarray(x)
    if x.ndim != 1:
        raise PatternArgumentError("x doit être un vecteur.")
    if len(x) != n_variables:
        raise PatternArgumentError(f"x doit être de longueur {n_variables}, reçu {len(x)}.")
    if m.max_variable_index() >= len(x):
        raise PatternArgumentError(f"Le modèle utilise la variable {m.max_variable_index() + 1} mais len(x)={len(x)}.")
    return m.evaluate(x)


def flip_coding(m, flipped):
    """
    Réécrit le modèle après le recodage x_j -> 1 - x_j pour j dans `flipped`.

    Chaque terme c_T B_T se développe en Σ_{U ⊆ T∩S} (-1)^|U| c_T B_{(T\\S) ∪ U} ;
    le coefficient de B_J est donc (-1)^{|J∩S|} Σ_{J ⊆ T ⊆ J∪S} c_T. Les sommes
    sont exactes (Fraction) ; les coefficients de valeur absolue inférieure à
    FLIP_ZERO_TOL (résidus d'arrondi des coefficients flottants) sont retirés.

    Args:
        m (PatternModel): Le modèle d'origine.
        flipped (iterable[int]): Indices (à partir de 0) des variables recodées.
    Returns:
        PatternModel: Le modèle g tel que g(x recodé) = m(x) pour tout x.
    """
    flipped = frozenset(int(j) for j in flipped)
    if any(j < 0 for j in flipped):
        raise PatternArgumentError(f"Indices de variable négatifs : {sorted(flipped)}")
    accumulated = defaultdict(Fraction)
    for pattern, c in ((Pattern(()), m.intercept),) + m.terms:
        kept = [i for i in pattern.indices if i not in flipped]
        touched = [i for i in pattern.indices if i in flipped]
        exact = Fraction(c)
        for k in range(len(touched) + 1):
            signed = exact if k % 2 == 0 else -exact
            for subset in itertools.combinations(touched, k):
                accumulated[Pattern(tuple(sorted(kept + list(subset))))] += signed
    intercept = accumulated.pop(Pattern(()), Fraction(0))
    ordered = sorted(accumulated.items(), key=lambda item: item[0].sort_key())
    terms = tuple((p, float(v)) for p, v in ordered if abs(v) >= FLIP_ZERO_TOL)
    return PatternModel(float(intercept), terms)
