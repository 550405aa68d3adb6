#!/usr/bin/env python3
"""
Interface en ligne de commande de LASSO-Patternsearch.
"""

import argparse
import logging
import os
import sys

import numpy as np

from patternsearch.core.patterns import PatternModel, build_design, enumerate_patterns, flip_coding
from patternsearch.core.pipeline import LpsConfig, run_lps, scramble_study
from patternsearch.core.simgen import SimSpec, replicate
from patternsearch.core.solver import ModelFit, PatternSearchSolver, lambda_grid
from patternsearch.core.tuning import SCORE_COLUMNS, score_path, score_path_rows, select_lambda
from patternsearch.exceptions import (
    CollinearityError,
    LpsError,
    ScoringError,
    SelectionError,
    SolverError,
)
from patternsearch.settings import (
    DEFAULT_CONFIG_PATH,
    build_model,
    default_seed,
    default_threads,
    load_environment,
    load_structured_file,
)
from patternsearch.tools.dataset_loader import (
    load_canonical_csv,
    load_cutpoints,
    load_dataset,
    write_canonical_csv,
)
from patternsearch.tools.file_manager import FileManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
NUMERICAL_ERRORS = (SolverError, ScoringError, SelectionError, CollinearityError)
TRACE_COLUMNS = ("lambda", "iter", "objective", "delta", "n_inactive", "step_type")


class UsageError(Exception):
    pass


class LpsArgumentParser(argparse.ArgumentParser):
    """argparse sort avec le code 2 sur erreur d'usage ; ici le code 2 est réservé aux échecs numériques."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: erreur : {message}\n")


class LpsCommands:
    """Une méthode par sous-commande ; chacune renvoie un dictionnaire de statut."""

    def __init__(self, file_manager=None):
        self.files = file_manager or FileManager()

    def _load_data(self, path, cutpoints=None):
        if cutpoints:
            return load_dataset(path, load_cutpoints(cutpoints)).dataset
        return load_canonical_csv(path)

    def _pipeline_config(self, args):
        path = args.settings or (DEFAULT_CONFIG_PATH if os.path.exists(DEFAULT_CONFIG_PATH) else None)
        payload = load_structured_file(path) if path else {}
        config = build_model(LpsConfig, payload, f"Configuration {path}" if path else "Configuration")
        solver = config.solver.model_copy(update={"seed": args.seed})
        return config.model_copy(update={"solver": solver, "n_jobs": args.threads})

    def ingest(self, args):
        """
        Dichotomise un CSV brut et écrit le CSV binaire canonique.
        Returns:
            dict: Statut, chemin écrit, lignes retirées.
        """
        result = load_dataset(args.csv, load_cutpoints(args.config))
        write_canonical_csv(result.dataset, args.out)
        return {
            "status": "success",
            "output": args.out,
            "n_samples": result.dataset.n_samples,
            "n_variables": result.dataset.n_variables,
            "dropped_rows": result.dropped_rows,
        }

    def expand(self, args):
        data = self._load_data(args.data, args.cutpoints)
        design = build_design(data, enumerate_patterns(data.n_variables, args.q))
        rows = [
            {
                "column": j,
                "pattern": pattern.label(data.var_names),
                "order": pattern.order,
                "n_ones": len(design.column_rows(j)),
            }
            for j, pattern in enumerate(design.patterns)
        ]
        self.files.write_csv(args.out, rows, ["column", "pattern", "order", "n_ones"])
        return {"status": "success", "output": args.out, "n_columns": design.n_columns}

    def fit(self, args):
        """
        Résout le problème pénalisé sur une grille de λ (ou un λ) et sauvegarde le chemin en JSON.
        Returns:
            dict: Statut et chemin écrit.
        """
        data = self._load_data(args.data, args.cutpoints)
        config = self._pipeline_config(args)
        design = build_design(data, enumerate_patterns(data.n_variables, args.q))
        on_iteration = None
        if args.trace:
            self.files.write_file(args.trace, ",".join(TRACE_COLUMNS) + "\n")
            current = {"lambda": None}

            def on_iteration(row):
                values = [current["lambda"]] + [row[c] for c in TRACE_COLUMNS[1:]]
                self.files.append_to_file(args.trace, ",".join(str(v) for v in values) + "\n")

        solver = PatternSearchSolver(design, data.y, config.solver, on_iteration)
        if args.lam is not None:
            grid = np.array([args.lam])
        else:
            grid = lambda_grid(solver.lambda_max(), config.n_lambdas, config.lambda_min_ratio)
        fits = []
        warm = None
        for lam in grid:
            if on_iteration is not None:
                current["lambda"] = float(lam)
            fit = solver.solve(float(lam), warm)
            fits.append(fit)
            warm = fit.coefficient_vector()
        payload = {
            "dataset_digest": data.digest(),
            "q": args.q,
            "var_names": list(data.var_names),
            "solver": config.solver.model_dump(),
            "fits": [fit.to_dict() for fit in fits],
        }
        self.files.write_json(args.out, payload)
        return {"status": "success", "output": args.out, "n_fits": len(fits)}

    def tune(self, args):
        data = self._load_data(args.data, args.cutpoints)
        saved = load_structured_file(args.path)
        if saved.get("dataset_digest") != data.digest():
            raise UsageError("Le chemin sauvegardé ne correspond pas à ces données (empreinte différente).")
        design = build_design(data, enumerate_patterns(data.n_variables, int(saved["q"])))
        fits = [ModelFit.from_dict(item) for item in saved["fits"]]
        records = score_path(fits, design, data.y, args.threads)
        chosen, scored = select_lambda(fits, design, data.y, args.criterion, records=records)
        self.files.write_csv(args.out, score_path_rows(scored, chosen.lam), SCORE_COLUMNS)
        return {
            "status": "success",
            "output": args.out,
            "lambda": chosen.lam,
            "patterns": [design.pattern_of_column(int(j)).label(data.var_names) for j in chosen.indices],
        }

    def lps(self, args):
        """
        Exécute le pipeline complet et écrit rapport JSON, chemin de scores et trace d'élimination.
        Returns:
            dict: Statut, fichiers écrits et modèle final.
        """
        data = self._load_data(args.data, args.cutpoints)
        report = run_lps(data, args.q, self._pipeline_config(args))
        os.makedirs(args.out_dir, exist_ok=True)
        outputs = {
            "report": os.path.join(args.out_dir, "report.json"),
            "score_path": os.path.join(args.out_dir, "score_path.csv"),
            "elimination": os.path.join(args.out_dir, "elimination.csv"),
        }
        payload = report.to_dict()
        payload["score_path_csv"] = outputs["score_path"]
        self.files.write_json(outputs["report"], payload)
        self.files.write_csv(outputs["score_path"], report.score_rows(), SCORE_COLUMNS)
        self.files.write_csv(
            outputs["elimination"],
            report.elimination_rows(),
            ["stage", "removed_pattern", "bgacv", "remaining_patterns"],
        )
        return {
            "status": "success",
            "outputs": outputs,
            "final_model": [label for label, _ in report.final_model.describe(data.var_names)],
        }

    def scramble(self, args):
        data = self._load_data(args.data, args.cutpoints)
        config = self._pipeline_config(args)
        table = scramble_study(data, args.q, config, args.reps, args.seed, args.threads)
        self.files.write_csv(args.out, table.to_rows(), ["order", "count"])
        if args.runs_out:
            self.files.write_csv(args.runs_out, table.run_rows(), ["run", "patterns"])
        return {"status": "success", "output": args.out, "total": table.total}

    def simulate(self, args):
        spec = SimSpec(example=args.example, n=args.n, rho=args.rho, rho1=args.rho1, rho2=args.rho2, seed=args.seed)
        if args.data_out:
            data, _ = spec.generate()
            write_canonical_csv(data, args.data_out)
        table = replicate(spec, args.reps, self._pipeline_config(args), args.q, args.threads)
        self.files.write_csv(args.out, table.to_rows(), table.columns())
        return {"status": "success", "output": args.out, "noise": table.noise}

    def flip(self, args):
        """
        Applique le recodage x_j -> 1 - x_j à un modèle sauvegardé (modèle seul ou rapport LPS).
        Returns:
            dict: Statut et chemin du modèle recodé.
        """
        payload = load_structured_file(args.model)
        var_names = payload.get("var_names")
        if "step2" in payload:
            payload = payload["step2"]["model"]
        model = PatternModel.from_dict(payload)
        flipped = set()
        for item in args.vars:
            if item.isdigit():
                flipped.add(int(item) - 1)
            elif var_names and item in var_names:
                flipped.add(var_names.index(item))
            else:
                raise UsageError(f"Variable inconnue : {item!r}.")
        result = flip_coding(model, flipped)
        self.files.write_json(args.out, result.to_dict(var_names))
        return {"status": "success", "output": args.out, "n_terms": len(result.terms)}


def _add_data_arguments(parser):
    parser.add_argument("data", help="CSV binaire canonique (ou brut avec --cutpoints)")
    parser.add_argument("--cutpoints", "--config", dest="cutpoints", help="configuration de seuils YAML/JSON")


def _add_pipeline_arguments(parser):
    parser.add_argument("--settings", help=f"configuration du pipeline (défaut : {DEFAULT_CONFIG_PATH})")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--seed", type=int, default=None, help="graine (défaut : LPS_SEED ou 0)")
    common.add_argument("--threads", type=int, default=None, help="workers (défaut : LPS_THREADS ou 1)")
    parser = LpsArgumentParser(prog="patternsearch", description="LASSO-Patternsearch")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=LpsArgumentParser)

    p = sub.add_parser("ingest", parents=[common], help="dichotomiser un CSV brut")
    p.add_argument("csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("expand", parents=[common], help="lister les motifs de la matrice de plan")
    _add_data_arguments(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", parents=[common], help="résoudre le problème pénalisé le long d'un chemin de λ")
    _add_data_arguments(p)
    _add_pipeline_arguments(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--trace", help="CSV des diagnostics par itération")
    p.add_argument("--out", required=True)

    p = sub.add_parser("tune", parents=[common], help="scorer un chemin sauvegardé par GACV/BGACV")
    p.add_argument("path")
    _add_data_arguments(p)
    p.add_argument("--criterion", choices=("gacv", "bgacv"), default="bgacv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("lps", parents=[common], help="pipeline complet")
    _add_data_arguments(p)
    _add_pipeline_arguments(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--out-dir", default="lps-output")

    p = sub.add_parser("scramble", parents=[common], help="étude de fausses alarmes par permutation de la réponse")
    _add_data_arguments(p)
    _add_pipeline_arguments(p)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--runs-out")

    p = sub.add_parser("simulate", parents=[common], help="réplications sur données simulées")
    p.add_argument("example", choices=("ex1", "ex2", "ex3", "gaw"))
    _add_pipeline_arguments(p)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--rho1", type=float, default=0.2)
    p.add_argument("--rho2", type=float, default=0.2)
    p.add_argument("--data-out", help="écrit aussi le premier jeu simulé en CSV canonique")
    p.add_argument("--out", required=True)

    p = sub.add_parser("flip", parents=[common], help="recoder des variables dans un modèle sauvegardé")
    p.add_argument("model")
    p.add_argument("--vars", nargs="+", required=True, help="indices (à partir de 1) ou noms")
    p.add_argument("--out", required=True)
    return parser


def run(argv=None):
    """
    Exécute une sous-commande.
    Args:
        argv (list, optional): Arguments (sys.argv[1:] par défaut).
    Returns:
        tuple: (code de sortie, dictionnaire de statut).
    """
    load_environment()
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is None:
            args.seed = default_seed()
        if args.threads is None:
            args.threads = default_threads()
        result = getattr(LpsCommands(), args.command)(args)
        return EXIT_OK, result
    except NUMERICAL_ERRORS as e:
        details = {"status": "error", "message": f"Échec numérique : {e}"}
        if isinstance(e, SolverError):
            details["diagnostics"] = e.diagnostics
        return EXIT_NUMERICAL, details
    except (LpsError, UsageError, ValueError, OSError, KeyError) as e:
        return EXIT_USAGE, {"status": "error", "message": f"Erreur : {e}"}


def main(argv=None):
    code, result = run(argv)
    if result["status"] == "success":
        print(f"✅ {result}")
    else:
        print(f"❌ {result['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
