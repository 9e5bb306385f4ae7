"""Command-line entry point.

Thin adapters over the library: no probability arithmetic happens here.
Exit codes: 0 success, 1 usage error, 2 validation/document errors,
3 runtime errors. Failures print one machine-parseable line
``ERROR <code>: message`` to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import IO

from bats import engine
from bats.compiler import compile_model
from bats.config import CliConfig, load_config
from bats.engine import Recommendation, Session, Terminal
from bats.errors import (
    BatsError,
    CompileBlocked,
    InvariantViolation,
    NothingToUndo,
    ParseError,
    SchemaVersionMismatch,
)
from bats.librarian import instantiate_module, search_replace
from bats.model import ErrorConditionModel, validate_model
from bats.persistence import (
    load_library,
    load_model,
    load_module,
    module_filename,
    parse_model,
    save_model,
    save_module,
    save_network,
)

VALIDATION_ERRORS = (CompileBlocked, InvariantViolation, ParseError, SchemaVersionMismatch)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); we own the codes
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="bats", description="Bayesian troubleshooter toolkit")
    parser.add_argument("--config", help="path to bats.config.json")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check model documents")
    p.add_argument("files", nargs="+")

    p = sub.add_parser("compile", help="compile a model into its network")
    p.add_argument("file")
    p.add_argument("-o", "--output")
    p.add_argument("--profile")

    p = sub.add_parser("run", help="interactive troubleshooting session")
    p.add_argument("file")
    p.add_argument("--profile")

    p = sub.add_parser("simulate", help="batch-simulate sessions")
    p.add_argument("file")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--policy", choices=["planner", "random"], default="planner")
    p.add_argument("--profile")

    p = sub.add_parser("lib", help="module library management")
    lib_sub = p.add_subparsers(dest="lib_command", required=True)
    lp = lib_sub.add_parser("list")
    lp.add_argument("--library")
    lp = lib_sub.add_parser("add")
    lp.add_argument("module_file")
    lp.add_argument("--library")
    lp = lib_sub.add_parser("instantiate")
    lp.add_argument("--library")
    lp.add_argument("--module", required=True)
    lp.add_argument("--model", required=True, dest="model_file")
    lp.add_argument("--at", required=True)
    lp.add_argument("--instance", default="1")
    lp.add_argument("--set", action="append", default=[], dest="assignments",
                    metavar="CAUSE=PROB")
    lp.add_argument("-o", "--output")

    p = sub.add_parser("replace", help="search/replace across model text")
    p.add_argument("--find", required=True)
    p.add_argument("--with", required=True, dest="replacement")
    p.add_argument("--scope", choices=["names", "explanations", "both"], default="both")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("files", nargs="+")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind")
    p.add_argument("--static")

    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_validate(args, config: CliConfig, out: IO[str]) -> int:
    total_errors = 0
    total_warnings = 0
    for name in args.files:
        data = Path(name).read_bytes()
        try:
            model = parse_model(data)
        except (ParseError, SchemaVersionMismatch) as exc:
            print(f"{name}: ERROR {exc.code}: {exc}", file=out)
            total_errors += 1
            continue
        report = validate_model(model)
        for finding in report.findings:
            print(f"{name}: {finding}", file=out)
        total_errors += len(report.errors)
        total_warnings += len(report.warnings)
    print(f"{total_errors} errors, {total_warnings} warnings", file=out)
    return 0 if total_errors == 0 else 2


def _cmd_compile(args, config: CliConfig, out: IO[str]) -> int:
    model = load_model(Path(args.file).read_bytes())
    network = compile_model(model, config.weights(args.profile))
    payload = save_network(network)
    if args.output:
        Path(args.output).write_bytes(payload)
        print(f"wrote {args.output}", file=out)
    else:
        out.write(payload.decode("utf-8"))
    return 0


def _format_posterior(session: Session) -> str:
    post = engine.posterior(session)
    cells = " ".join(f"{cause}={p:.12g}" for cause, p in post.items())
    return f"posterior: {cells}"


def run_interactive(model_path: str, profile: str | None, config: CliConfig,
                    stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout) -> int:
    """Loop: recommend, display, read outcome, record; supports undo/quit.

    The final transcript echoes the full history, the payload a support
    agent picks up when the automated session hands off.
    """
    model = load_model(Path(model_path).read_bytes())
    network = compile_model(model, config.weights(profile))
    session = Session(network)
    print(f"troubleshooting: {model.name}", file=stdout)

    step_no = 0
    while True:
        decision = engine.next_step(session)
        if isinstance(decision, Terminal):
            break
        step_no += 1
        _print_recommendation(decision, model, network, step_no, stdout)
        step = network.step_by_id(decision.step_id)
        prompt = "/".join(step.outcomes)
        while True:
            print(f"outcome ({prompt}/undo/quit)> ", file=stdout, end="", flush=True)
            line = stdin.readline()
            if not line:
                answer = "quit"
            else:
                answer = line.strip()
            if answer == "quit":
                print("session aborted", file=stdout)
                return 0
            if answer == "undo":
                try:
                    engine.undo_last(session)
                    step_no = max(step_no - 2, 0)
                    print("undone", file=stdout)
                except NothingToUndo:
                    print("nothing to undo", file=stdout)
                break
            if answer in step.outcomes:
                engine.record_outcome(session, decision.step_id, answer)
                print(_format_posterior(session), file=stdout)
                break
            print(f"unknown outcome {answer!r}", file=stdout)

    if session.status == engine.RESOLVED:
        solved_by = session.resolved_by
        source = model.action_by_id(solved_by)
        print(f"RESOLVED by {source.name if source else solved_by}", file=stdout)
    else:
        print("UNRESOLVED: out of actions; hand off to a support agent", file=stdout)
    print("transcript:", file=stdout)
    for i, entry in enumerate(session.history, 1):
        print(f"  {i}. {entry.step_id} -> {entry.outcome}", file=stdout)
    return 0


def _print_recommendation(rec: Recommendation, model: ErrorConditionModel,
                          network, step_no: int, out: IO[str]) -> None:
    source = model.action_by_id(rec.step_id) or model.question_by_id(rec.step_id)
    name = source.name if source else rec.step_id
    step = network.step_by_id(rec.step_id)
    if rec.success_probability is not None:
        detail = f"cost={step.cost:.12g} success={rec.success_probability:.12g}"
        label = "ACTION" if step.kind != "question" else "QUESTION"
    else:
        detail = f"cost={step.cost:.12g}"
        label = "QUESTION"
    print(f"[{step_no}] {label} {name} ({detail}, ecr={rec.ecr:.12g})", file=out)
    if source is not None and source.explanation:
        print(f"    {source.explanation}", file=out)


def _cmd_run(args, config: CliConfig, out: IO[str]) -> int:
    return run_interactive(args.file, args.profile, config, stdin=sys.stdin, stdout=out)


def _cmd_simulate(args, config: CliConfig, out: IO[str]) -> int:
    model = load_model(Path(args.file).read_bytes())
    network = compile_model(model, config.weights(args.profile))
    report = engine.simulate(network, args.policy, args.trials, args.seed)
    print(f"policy={report.policy} trials={report.trials} seed={report.seed}", file=out)
    print(f"resolution_rate={report.resolution_rate!r}", file=out)
    print(f"mean_cost={report.mean_cost!r}", file=out)
    print(f"mean_steps={report.mean_steps!r}", file=out)
    return 0


def _cmd_lib(args, config: CliConfig, out: IO[str]) -> int:
    library_dir = Path(args.library or config.library_dir)
    if args.lib_command == "list":
        library = load_library(library_dir)
        for module in library.modules.values():
            print(f"{module.id}\tv{module.version}\t{module.name}", file=out)
        print(f"{len(library.modules)} modules", file=out)
        return 0
    if args.lib_command == "add":
        module = load_module(Path(args.module_file).read_bytes())
        library_dir.mkdir(parents=True, exist_ok=True)
        target = library_dir / module_filename(module.id)
        if target.exists():
            from bats.errors import DuplicateModuleId

            raise DuplicateModuleId(f"library already has a module {module.id!r}")
        target.write_bytes(save_module(module))
        print(f"added {module.id} -> {target}", file=out)
        return 0
    if args.lib_command == "instantiate":
        library = load_library(library_dir)
        module = library.modules.get(args.module)
        if module is None:
            raise BatsError(f"no module {args.module!r} in {library_dir}")
        model = load_model(Path(args.model_file).read_bytes())
        assignments = {}
        for item in args.assignments:
            cause, _, value = item.partition("=")
            if not value:
                raise UsageError(f"--set expects CAUSE=PROB, got {item!r}")
            assignments[cause] = float(value)
        updated = instantiate_module(module, model, args.at, assignments,
                                     instance=args.instance)
        target = Path(args.output or args.model_file)
        target.write_bytes(save_model(updated))
        print(f"instantiated {module.id} into {updated.id} at {args.at} -> {target}",
              file=out)
        return 0
    raise UsageError(f"unknown lib command {args.lib_command!r}")


def _cmd_replace(args, config: CliConfig, out: IO[str]) -> int:
    models = []
    for name in args.files:
        models.append(load_model(Path(name).read_bytes()))
    updated, hits = search_replace(models, args.find, args.replacement,
                                   scope=args.scope, dry_run=args.dry_run)
    for hit in hits:
        print(f"{hit.model_id}:{hit.path}: {hit.before!r} -> {hit.after!r}", file=out)
    if not args.dry_run:
        for name, before, after in zip(args.files, models, updated):
            if after is not before:
                Path(name).write_bytes(save_model(after))
    touched = sum(1 for before, after in zip(models, updated) if after is not before)
    mode = "dry-run, files untouched" if args.dry_run else f"{touched} files rewritten"
    print(f"{len(hits)} replacements ({mode})", file=out)
    return 0


def _cmd_serve(args, config: CliConfig, out: IO[str]) -> int:
    from dataclasses import replace as _replace

    from bats.service import serve

    if args.bind:
        config = _replace(config, bind=args.bind)
    print(f"serving on {config.bind}", file=out)
    serve(config, static_dir=args.static)
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "compile": _cmd_compile,
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "lib": _cmd_lib,
    "replace": _cmd_replace,
    "serve": _cmd_serve,
}


def dispatch(argv: list[str], stdout: IO[str] = sys.stdout,
             stderr: IO[str] = sys.stderr) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"ERROR usage: {exc}", file=stderr)
        return 1
    try:
        config = load_config(args.config)
        return _COMMANDS[args.command](args, config, stdout)
    except UsageError as exc:
        print(f"ERROR usage: {exc}", file=stderr)
        return 1
    except VALIDATION_ERRORS as exc:
        print(f"ERROR {exc.code}: {exc}", file=stderr)
        return 2
    except BatsError as exc:
        print(f"ERROR {exc.code}: {exc}", file=stderr)
        return 3
    except OSError as exc:
        print(f"ERROR io: {exc}", file=stderr)
        return 3


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
