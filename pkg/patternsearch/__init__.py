"""LASSO-Patternsearch : recherche de motifs booléens d'interaction pour une réponse binaire."""

__version__ = "0.1.0"
