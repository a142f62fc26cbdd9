"""Command-line front end.

Every subcommand reads files, writes files into ``--out`` and leaves a
``manifest-<subcommand>.json`` next to them. Exit codes: 0 success, 1 data
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bayes import fit_bayes, flag_matrix, scores_to_csv, select_significant_types, type_success_table
from .datagen import CohortSpec, default_spec, generate, write_cohort
from .exceptions import VleMinerError
from .export import GraphStyle, rules_to_json, rules_to_table, to_dot
from .features import Outcome, aggregate_weekly, features_to_csv, label_outcomes
from .guha import build_attribute_matrix, mine_assoc, parse_quantifier
from .ingest import Dataset, PresentationConfig, load_config, validate
from .markov import (
    StateSpace,
    build_sequences,
    default_catalog,
    fit_transitions,
    parse_catalog,
    scenario_report,
    split_by_outcome,
    transitions_from_csv,
)


def _week_range(text: str) -> range:
    lo, sep, hi = text.partition("-")
    try:
        lo_i = int(lo)
        hi_i = int(hi) if sep else lo_i
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A-B, got {text!r}") from None
    if lo_i < 0 or hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"bad week range {text!r}")
    return range(lo_i, hi_i + 1)


def _quantifier(text: str):
    try:
        return parse_quantifier(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _space(text: str) -> StateSpace:
    try:
        return StateSpace.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= value <= 1:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vle-miner", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def data_cmd(name, help_text, weeks="0-4"):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--clicks", required=True, metavar="PATH", help="clickstream CSV (id_student,date,activity_type,sum_click)")
        p.add_argument("--assessments", required=True, metavar="PATH", help="assessment CSV (id_student,assessment,score)")
        p.add_argument("--config", metavar="PATH", help="key=value presentation config file")
        p.add_argument("--tma", type=_positive, metavar="N", help="TMA of interest (overrides config)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        if weeks is not None:
            p.add_argument("--weeks", type=_week_range, default=_week_range(weeks), metavar="A-B",
                           help=f"weeks considered (default {weeks})")
        return p

    p = data_cmd("ingest-check", "validate input files and print a summary", weeks=None)
    p = data_cmd("features", "write the weekly feature matrix", weeks=None)

    p = data_cmd("bayes", "content-type success table, significant types and Bayes failure scores")
    p.add_argument("--alpha", type=_probability, default=0.05, help="significance level (default 0.05)")
    p.add_argument("--min-group", type=_positive, default=30, metavar="N",
                   help="minimum active and inactive group size (default 30)")
    p.add_argument("--fail-classes", choices=["not-submitted-or-failed", "not-submitted"],
                   default="not-submitted-or-failed", help="which outcomes count as failing")

    p = data_cmd("guha", "mine ASSOC rules whose succedent is the TMA outcome")
    p.add_argument("--quantifier", type=_quantifier, default=_quantifier("fi:0.9:20"), metavar="SPEC",
                   help="fi:<p>:<base> (founded implication) or aa:<q>:<base> (above average); default fi:0.9:20")
    p.add_argument("--max-length", type=_positive, default=3, metavar="N", help="max antecedent literals (default 3)")
    p.add_argument("--bins", type=_positive, default=5, metavar="N", help="equal-frequency bins for counts (default 5)")
    p.add_argument("--types", default="", metavar="T1,T2", help="content types to add as weekly flags")

    p = data_cmd("markov", "fit weekly transition models and render them as DOT")
    p.add_argument("--space", type=_space, default=_space("intensity:30"), metavar="SPEC",
                   help="intensity:<step>[:<max>] or types:<t1,t2,...> (default intensity:30)")
    p.add_argument("--split-outcome", action="store_true",
                   help="separate models for NotSubmitted and Passed students")
    p.add_argument("--scenario", metavar="NAME", help="restrict to students matching this catalog scenario")
    p.add_argument("--scenario-catalog", metavar="PATH", help="scenario catalog file (default: built-in)")
    p.add_argument("--min-prob", type=_probability, default=0.01, help="omit DOT edges below this probability")

    p = data_cmd("scenarios", "outcome breakdown per weekly zero-activity scenario")
    p.add_argument("--scenario-catalog", metavar="PATH", help="scenario catalog file (default: built-in)")

    p = sub.add_parser("render-dot", help="render a transition CSV as a layered DOT graph",
                       description="render a transition CSV as a layered DOT graph")
    p.add_argument("--transitions", required=True, metavar="PATH", help="transition CSV from the markov subcommand")
    p.add_argument("--space", type=_space, metavar="SPEC", help="state space, to keep the state order")
    p.add_argument("--min-prob", type=_probability, default=0.01, help="omit edges below this probability")
    p.add_argument("--out", metavar="DIR", help="output directory")

    p = sub.add_parser("generate", help="write a synthetic cohort with ground truth",
                       description="write a synthetic cohort with ground truth")
    p.add_argument("--spec", default="default", metavar="default|PATH", help="cohort spec JSON or 'default'")
    p.add_argument("--seed", type=int, metavar="N", help="random seed (overrides the cohort spec)")
    p.add_argument("--n", type=int, metavar="N", help="number of students (overrides the cohort spec)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    return parser


def _space_text(space: StateSpace) -> str:
    if space.binning is not None:
        return f"{space.kind}:{space.binning.to_string()}"
    return f"{space.kind}:" + ",".join(space.types)


class _Run:
    """Collects written files for the manifest."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.outputs: dict[str, str] = {}

    def write(self, name: str, text: str):
        if self.out is None:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
        self.outputs[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def record(self, path: Path):
        rel = path.relative_to(self.out).as_posix()
        self.outputs[rel] = hashlib.sha256(path.read_bytes()).hexdigest()

    def finish(self):
        if self.out is None:
            return
        params = {}
        for key, value in sorted(vars(self.args).items()):
            if isinstance(value, range):
                value = f"{value[0]}-{value[-1]}"
            elif isinstance(value, StateSpace):
                value = _space_text(value)
            elif value is not None and not isinstance(value, (str, int, float, bool)):
                value = str(value)
            params[key] = value
        manifest = {
            "tool": "vle-miner",
            "version": __version__,
            "subcommand": self.args.command,
            "argv": self.argv,
            "inputs": {k: params.get(k) for k in ("clicks", "assessments", "config", "transitions", "spec")
                       if params.get(k) is not None},
            "parameters": params,
            "seed": params.get("seed"),
            "outputs": dict(sorted(self.outputs.items())),
        }
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        (self.out / f"manifest-{self.args.command}.json").write_text(text, encoding="utf-8", newline="\n")


def _load(args) -> Dataset:
    config = load_config(args.config) if args.config else PresentationConfig()
    config = config.with_overrides(tma_of_interest=args.tma)
    dataset = Dataset.load(args.clicks, args.assessments, config)
    weeks = getattr(args, "weeks", None)
    if weeks is not None and weeks[-1] > config.num_weeks:
        raise VleMinerError(f"--weeks {weeks[0]}-{weeks[-1]} exceeds num_weeks={config.num_weeks}")
    return dataset


def _catalog(args):
    if args.scenario_catalog:
        return parse_catalog(Path(args.scenario_catalog).read_text(encoding="utf-8"))
    return default_catalog()


def cmd_ingest_check(run: _Run):
    report = validate(_load(run.args))
    text = json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    run.write("validation.json", text)


def cmd_features(run: _Run):
    dataset = _load(run.args)
    features = aggregate_weekly(dataset)
    run.write("features.csv", features_to_csv(features, label_outcomes(dataset)))


def cmd_bayes(run: _Run):
    args = run.args
    dataset = _load(args)
    features = aggregate_weekly(dataset)
    outcomes = label_outcomes(dataset)
    table = type_success_table(features, outcomes, args.weeks)
    selected = select_significant_types(table, args.alpha, args.min_group)
    selection = [(w, None) for w in args.weeks] + [(w, t) for w in args.weeks for t in selected]
    fail = (Outcome.NOT_SUBMITTED,) if args.fail_classes == "not-submitted" else (Outcome.NOT_SUBMITTED, Outcome.FAILED)
    model = fit_bayes(features, outcomes, selection, fail_classes=fail)
    p_fail = model.predict_proba(flag_matrix(features, selection))[:, 1]
    run.write("type_success.csv", table.to_csv())
    run.write("selected_types.txt", "".join(f"{t}\n" for t in selected))
    run.write("bayes_model.txt", model.to_text())
    run.write("scores.csv", scores_to_csv(features.students, p_fail))
    sys.stdout.write(f"selected types: {', '.join(selected) or '(none)'}\n")


def cmd_guha(run: _Run):
    args = run.args
    dataset = _load(args)
    features = aggregate_weekly(dataset)
    outcomes = label_outcomes(dataset)
    types = [t.strip() for t in args.types.split(",") if t.strip()]
    unknown = set(types) - set(features.content_types)
    if unknown:
        raise VleMinerError(f"unknown content type(s) in --types: {', '.join(sorted(unknown))}")
    matrix = build_attribute_matrix(features, outcomes, args.weeks, type_flags=types, n_bins=args.bins)
    rules = mine_assoc(matrix, None, (Outcome.NOT_SUBMITTED, Outcome.PASSED), args.quantifier, args.max_length)
    run.write("hypotheses.csv", rules_to_table(rules))
    run.write("hypotheses.json", rules_to_json(rules))
    sys.stdout.write(f"{len(rules)} hypotheses\n")


def cmd_markov(run: _Run):
    args = run.args
    dataset = _load(args)
    features = aggregate_weekly(dataset)
    outcomes = label_outcomes(dataset)
    space = args.space
    unknown = set(space.types) - set(features.content_types)
    if unknown:
        raise VleMinerError(f"unknown content type(s) in --space: {', '.join(sorted(unknown))}")
    if args.scenario:
        specs = {s.name: s for s in _catalog(args)}
        if args.scenario not in specs:
            raise VleMinerError(f"no scenario named {args.scenario!r} in the catalog")
        hit = specs[args.scenario].match_totals(features.total_clicks)
        features = features.subset([s for s, h in zip(features.students, hit) if h])
    sequences = build_sequences(features, space, args.weeks)
    style = GraphStyle(min_edge_probability=args.min_prob)
    if args.split_outcome:
        models = split_by_outcome(sequences, outcomes, (Outcome.NOT_SUBMITTED, Outcome.PASSED), space)
        for cls, model in models.items():
            run.write(f"transitions_{cls.value}.csv", model.to_csv())
            if model.defined.any():
                run.write(f"transitions_{cls.value}.dot", to_dot(model, GraphStyle(style.min_edge_probability,
                                                                                   name=f"transitions_{cls.value}")))
    else:
        model = fit_transitions(sequences, space)
        run.write("transitions.csv", model.to_csv())
        run.write("transitions.dot", to_dot(model, style))


def cmd_scenarios(run: _Run):
    args = run.args
    dataset = _load(args)
    features = aggregate_weekly(dataset)
    report = scenario_report(_catalog(args), features, label_outcomes(dataset), args.weeks)
    text = report.to_csv()
    run.write("scenarios.csv", text)
    if run.out is None:
        sys.stdout.write(text)


def cmd_render_dot(run: _Run):
    args = run.args
    path = Path(args.transitions)
    model = transitions_from_csv(path.read_text(encoding="utf-8"), args.space)
    dot = to_dot(model, GraphStyle(args.min_prob, name=path.stem))
    if run.out is None:
        sys.stdout.write(dot)
    run.write(f"{path.stem}.dot", dot)


def cmd_generate(run: _Run):
    args = run.args
    if args.spec == "default":
        spec = default_spec()
    else:
        spec = CohortSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n is not None:
        overrides["n_students"] = args.n
    if overrides:
        from dataclasses import replace
        spec = replace(spec, **overrides)
    cohort = generate(spec.validate())
    for path in write_cohort(cohort, run.out):
        run.record(path)
    run.args.seed = spec.seed


COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "features": cmd_features,
    "bayes": cmd_bayes,
    "guha": cmd_guha,
    "markov": cmd_markov,
    "scenarios": cmd_scenarios,
    "render-dot": cmd_render_dot,
    "generate": cmd_generate,
}


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    state = _Run(args, argv)
    try:
        COMMANDS[args.command](state)
        state.finish()
    except VleMinerError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
