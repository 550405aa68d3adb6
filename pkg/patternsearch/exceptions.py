"""Hiérarchie d'erreurs du projet."""


class LpsError(Exception):
    """Erreur de base de LASSO-Patternsearch."""


class PatternArgumentError(LpsError, ValueError):
    """Argument invalide pour l'énumération ou l'évaluation des motifs."""


class DatasetError(LpsError, ValueError):
    """Jeu de données binaire mal formé."""


class IngestError(LpsError):
    """Échec de lecture ou de dichotomisation d'un fichier CSV."""


class ConfigError(LpsError):
    """Fichier de configuration invalide."""


class SolverError(LpsError):
    """Échec numérique interne du solveur.

    Args:
        message (str): Description de l'échec.
        diagnostics (dict): État du solveur au moment de l'échec.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ScoringError(LpsError):
    """Score GACV/BGACV impossible à calculer (par ex. n ≤ N_B0)."""


class SelectionError(LpsError):
    """Aucun ajustement du chemin n'a pu être noté."""


class CollinearityError(LpsError):
    """Colonnes linéairement dépendantes dans une régression logistique.

    Args:
        message (str): Description.
        pattern (str): Libellé du motif fautif.
    """

    def __init__(self, message, pattern=None):
        super().__init__(message)
        self.pattern = pattern


class BudgetExceededError(LpsError):
    """Le nombre de fonctions de base dépasse le budget configuré."""
