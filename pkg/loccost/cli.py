#!/usr/bin/env python3
"""loccost CLI - entanglement cost of controlled-phase gates under LOCC."""
import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from collections import Counter
from functools import partial
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from .config import RunConfig, Settings, config_key, load_config, load_settings, save_config
from .errors import LoccostError

logger = logging.getLogger("loccost")

err_console = Console(stderr=True)

USAGE = """loccost - entanglement cost of controlled-phase gates under LOCC

Commands:
    protocol             Run the single-shot protocol (sampled, --exhaustive, --composite)
    cost                 Cost curve E_theta over a theta grid (--theta-max, --tradeoff)
    markov               Markovianizing cost M(U) of a gate (--gate utilde-dagger:0.5)
    nshot                Failure probability of the n-shot batch versus n
    typicality           Typical-set concentration scan (--dilution)
    fullmn               Exact full protocol with reference systems (n <= 3)
    history              List recorded runs
    config               Show configuration
    config KEY VALUE     Set a configuration key in the package .env
    version              Show version information

Common options:
    --format csv|json    Output format (default csv; markov defaults to json)
    --output PATH        Write to a file instead of stdout
    --seed N             Random seed (default from LOCCOST_SEED)
    --workers N          Parallel trial workers (default from LOCCOST_WORKERS)
    --verbose            Debug logging on stderr
    --no-record          Do not record the run in the run store
"""


class CommandResult:
    """Rows and headline numbers of one analysis command."""

    def __init__(self, config: RunConfig, rows: list[dict], summary: dict, flat: bool = False):
        self.config = config
        self.rows = rows
        self.summary = summary
        # flat JSON puts the summary fields next to config instead of under "summary"
        self.flat = flat


# ---------------------------------------------------------------------------
# Argument helpers
# ---------------------------------------------------------------------------

def parse_int_list(text: str) -> list[int]:
    """"20,50,100" or "4:20:4" (inclusive start:stop:step)."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step <= 0:
                raise ValueError
            values = list(range(start, stop + 1, step))
        else:
            values = [int(p) for p in text.split(",") if p.strip()]
        if not values:
            raise ValueError
        return values
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def parse_grid(text: str) -> tuple[float, float, int]:
    """"start:stop:count"."""
    try:
        start, stop, count = text.split(":")
        return float(start), float(stop), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}, expected start:stop:count") from None


def _parser(command: str, settings: Settings, default_format: str = "csv") -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=f"loccost {command}")
    parser.add_argument("--format", choices=("csv", "json"), default=default_format)
    parser.add_argument("--output", type=Path)
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--workers", type=int, default=settings.workers)
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--no-record", action="store_true")
    return parser


def _run_config(command: str, args: argparse.Namespace, **fields) -> RunConfig:
    from .version import get_local_version

    return RunConfig(command=command, version=get_local_version(), seed=args.seed, format=args.format,
                     output=str(args.output) if args.output else None, workers=args.workers, **fields)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _plain(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def render(result: CommandResult) -> str:
    if result.config.format == "json":
        summary = {k: _plain(v) for k, v in result.summary.items()}
        if result.flat:
            payload = {"config": result.config.echo(), **summary}
        else:
            payload = {
                "config": result.config.echo(),
                "summary": summary,
                "rows": [{k: _plain(v) for k, v in row.items()} for row in result.rows],
            }
        return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    buf = io.StringIO()
    for key, value in result.config.echo().items():
        buf.write(f"# {key}={json.dumps(value) if isinstance(value, (list, dict)) else value}\n")
    for key, value in result.summary.items():
        buf.write(f"# {key}={_plain(value)}\n")
    if result.rows:
        columns = list(result.rows[0])
        for row in result.rows[1:]:
            columns += [c for c in row if c not in columns]
        writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writeheader()
        for row in result.rows:
            writer.writerow({k: _plain(v) for k, v in row.items()})
    return buf.getvalue()


def emit(result: CommandResult, output: Path | None) -> None:
    text = render(result)
    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text, encoding="utf-8")
        err_console.print(f"[green]✓[/green] Wrote [dim]{output}[/dim]")
    else:
        sys.stdout.write(text)


def setup_logging(level: str, verbose: bool = False) -> None:
    handler = RichHandler(console=err_console, show_time=False, show_path=False)
    root = logging.getLogger("loccost")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else level.upper())
    root.propagate = False


# ---------------------------------------------------------------------------
# Analysis commands
# ---------------------------------------------------------------------------

def _sampled_branch(theta: float, alpha: float, composite: bool, state, rng: np.random.Generator) -> str:
    """Run one sampled path through the engine and return its branch label."""
    from .protocols import Sampled, composite_single_shot, prob_first_half

    run = composite_single_shot if composite else prob_first_half
    return run(theta, alpha, state, Sampled(rng)).transcript.branch_label


def cmd_protocol(argv: list[str], settings: Settings) -> CommandResult:
    """Single-shot first half or composite protocol."""
    from .cost import avg_cost, best_alpha, success_prob
    from .gates import check_alpha, check_theta
    from .protocols import (
        Exhaustive,
        composite_single_shot,
        prepare_input,
        prob_first_half,
        random_pair_inputs,
        target_state,
    )
    from .runtime import count_rounds
    from .trials import map_trials

    parser = _parser("protocol", settings)
    parser.add_argument("--theta", type=float, required=True)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--trials", type=int, default=10000)
    parser.add_argument("--exhaustive", action="store_true")
    parser.add_argument("--composite", action="store_true")
    parser.add_argument("--optimize-alpha", action="store_true")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    theta = check_theta(args.theta)
    if args.alpha is not None:
        alpha = check_alpha(args.alpha)
    elif args.optimize_alpha:
        alpha = best_alpha(theta).alpha_opt
    else:
        alpha = math.sqrt(theta)
    config = _run_config("protocol", args, theta=theta, alpha=alpha,
                         trials=None if args.exhaustive else args.trials,
                         options={"composite": args.composite, "exhaustive": args.exhaustive,
                                  "optimize_alpha": args.optimize_alpha})

    psi = random_pair_inputs(args.seed, 1)[0]
    state = prepare_input(psi, alpha, standby=args.composite)
    mode = Exhaustive(settings.branch_limit)
    if args.composite:
        leaves = composite_single_shot(theta, alpha, state, mode)
    else:
        leaves = prob_first_half(theta, alpha, state, mode)

    branch_rows = []
    for p, out in leaves:
        expected = target_state(theta if out.success or args.composite else out.residual_angle, psi)
        branch_rows.append({
            "branch": out.transcript.branch_label,
            "probability": p,
            "success": out.success,
            "residual_angle": out.residual_angle,
            "fidelity": abs(expected.overlap(out.post_state)) ** 2,
            "rounds": count_rounds(out.transcript),
            "net_cost": out.ledger.net_cost,
        })

    p_enumerated = math.fsum(r["probability"] for r in branch_rows if r["success"])
    summary = {
        "p_analytic": success_prob(alpha, theta),
        "p_enumerated": p_enumerated,
        "probability_total": math.fsum(r["probability"] for r in branch_rows),
        "min_fidelity": min(r["fidelity"] for r in branch_rows),
        "max_rounds": max(r["rounds"] for r in branch_rows),
    }
    if args.composite:
        summary["cost_analytic"] = avg_cost(alpha, theta)
        summary["cost_enumerated"] = math.fsum(r["probability"] * r["net_cost"] for r in branch_rows)

    if args.exhaustive:
        return CommandResult(config, branch_rows, summary)

    labels = map_trials(partial(_sampled_branch, theta, alpha, args.composite, state),
                        args.seed, args.trials, args.workers)
    tally = Counter(labels)
    counts = [tally[r["branch"]] for r in branch_rows]
    successes = int(sum(c for c, r in zip(counts, branch_rows) if r["success"]))
    rate = successes / args.trials if args.trials else 0.0
    p = summary["p_analytic"]
    stderr = math.sqrt(p * (1 - p) / args.trials) if args.trials else 0.0
    summary.update({
        "empirical_rate": rate,
        "stderr": stderr,
        "z_score": (rate - p) / stderr if stderr > 0 else 0.0,
        "mean_net_cost": float(np.dot(counts, [r["net_cost"] for r in branch_rows]) / max(args.trials, 1)),
    })
    if args.composite:
        mean = summary["cost_enumerated"]
        spread = math.fsum(r["probability"] * (r["net_cost"] - mean) ** 2 for r in branch_rows)
        summary["cost_stderr"] = math.sqrt(spread / args.trials) if args.trials else 0.0
    rows = [dict(r, count=int(c)) for r, c in zip(branch_rows, counts)]
    return CommandResult(config, rows, summary)


def cmd_cost(argv: list[str], settings: Settings) -> CommandResult:
    from .cost import best_alpha, continuity_constant, cost_curve, e_theta, theta_grid, theta_max_solve, tradeoff_report

    parser = _parser("cost", settings)
    parser.add_argument("--grid", type=parse_grid, default=(1e-3, math.pi / 2, 25))
    parser.add_argument("--linear", action="store_true")
    parser.add_argument("--theta-max", action="store_true")
    parser.add_argument("--tol", type=float, default=1e-10)
    parser.add_argument("--tradeoff", action="store_true")
    parser.add_argument("--theta", type=float)
    parser.add_argument("--optimize-alpha", action="store_true")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    if args.tradeoff:
        if args.theta is None:
            parser.error("--tradeoff needs --theta")
        report = tradeoff_report(args.theta)
        config = _run_config("cost", args, theta=report.theta, options={"tradeoff": True})
        return CommandResult(config, [report.model_dump()], {"separation": report.separation})

    if args.theta_max:
        theta_star = theta_max_solve(args.tol)
        e_star = e_theta(theta_star).E_theta
        config = _run_config("cost", args, options={"theta_max": True, "tol": args.tol})
        return CommandResult(config, [{"theta_max": theta_star, "E_theta": e_star, "gap": 1.0 - e_star}],
                             {"converged": abs(1.0 - e_star) <= args.tol})

    start, stop, count = args.grid
    thetas = theta_grid(start, stop, count, log=not args.linear)
    rows = []
    for profile in cost_curve(thetas):
        row = profile.model_dump()
        if args.optimize_alpha:
            search = best_alpha(profile.theta)
            row.update(alpha_opt=search.alpha_opt, E_opt=search.E_opt)
        rows.append(row)
    values = [r["E_theta"] for r in rows]
    config = _run_config("cost", args, options={"grid": f"{start}:{stop}:{count}", "linear": args.linear,
                                                "optimize_alpha": args.optimize_alpha})
    summary = {
        "monotone": all(b >= a for a, b in zip(values, values[1:])),
        "below_one": sum(1 for v in values if v < 1.0),
        "continuity_constant": continuity_constant(thetas) if len(thetas) > 1 else 0.0,
    }
    return CommandResult(config, rows, summary)


def cmd_markov(argv: list[str], settings: Settings) -> CommandResult:
    from .gates import parse_gate_selector
    from .markov import markov_report

    parser = _parser("markov", settings, default_format="json")
    parser.add_argument("--gate", default="utilde-dagger:1.0")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    report = markov_report(parse_gate_selector(args.gate))
    config = _run_config("markov", args, options={"gate": args.gate})
    data = report.model_dump()
    if args.format == "json":
        return CommandResult(config, [], data, flat=True)
    rows = [{"key": k, "value": json.dumps(v) if isinstance(v, (list, dict)) else v} for k, v in data.items()]
    return CommandResult(config, rows, {"markov_cost_bits": report.markov_cost_bits})


def cmd_nshot(argv: list[str], settings: Settings) -> CommandResult:
    from .protocols import decay_fit, nshot_estimate, nshot_exact, MAX_EXACT_NSHOT_N

    parser = _parser("nshot", settings)
    parser.add_argument("--theta", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=0.15)
    parser.add_argument("--n", type=parse_int_list, default=[20, 50, 100])
    parser.add_argument("--trials", type=int, default=10000)
    parser.add_argument("--exact", action="store_true")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    config = _run_config("nshot", args, theta=args.theta, delta=args.delta, n=args.n, trials=args.trials,
                         options={"exact": args.exact})
    rows = []
    for n in args.n:
        est = nshot_estimate(args.theta, n, args.delta, args.trials, args.seed, args.workers)
        row = est.model_dump()
        if args.exact and n <= MAX_EXACT_NSHOT_N:
            exact = nshot_exact(args.theta, n, args.delta, seed=args.seed)
            row.update(trace_distance=exact.trace_distance, bound=exact.bound)
        rows.append(row)
        logger.info("n=%d epsilon_hat=%.6g", n, est.epsilon_hat)
    eps = [r["epsilon_hat"] for r in rows]
    summary = {
        "nonincreasing": all(b <= a for a, b in zip(eps, eps[1:])),
        "decay_slope": decay_fit(args.n, eps),
    }
    return CommandResult(config, rows, summary)


def cmd_typicality(argv: list[str], settings: Settings) -> CommandResult:
    from .typicality import concentration_scan, dilution_feasible, eps_prime_direct

    parser = _parser("typicality", settings)
    parser.add_argument("--theta", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=0.15)
    parser.add_argument("--n", type=parse_int_list, default=list(range(4, 21, 4)))
    parser.add_argument("--dilution", action="store_true")
    parser.add_argument("--budget", type=float)
    parser.add_argument("--check-direct", action="store_true")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    config = _run_config("typicality", args, theta=args.theta, delta=args.delta, n=args.n,
                         options={"dilution": args.dilution, "budget": args.budget,
                                  "check_direct": args.check_direct})
    scan = concentration_scan(args.theta, args.delta, args.n)
    rows = []
    for row in scan.rows:
        data = row.model_dump()
        if args.dilution:
            cert = dilution_feasible(args.theta, row.n, args.delta, args.budget)
            data.update(budget_bits=cert.budget_bits, rank_bits=cert.rank_bits,
                        support=cert.support, feasible=cert.feasible)
        if args.check_direct and row.n <= 8:
            data["eps_prime_direct"] = eps_prime_direct(args.theta, row.n, args.delta)
        rows.append(data)
    summary = {"exponent": scan.exponent, "decreased": scan.decreased, "monotone": scan.monotone}
    return CommandResult(config, rows, summary)


def cmd_fullmn(argv: list[str], settings: Settings) -> CommandResult:
    from .protocols import full_mn

    parser = _parser("fullmn", settings)
    parser.add_argument("--theta", type=float, default=1.0)
    # at theta=1 the weakly typical set is empty for n <= 2 unless delta > 0.40
    parser.add_argument("--delta", type=float, default=0.45)
    parser.add_argument("--n", type=parse_int_list, default=[1, 2])
    parser.add_argument("--sampled", action="store_true")
    args = parser.parse_args(argv)
    setup_logging(settings.log_level, args.verbose)

    config = _run_config("fullmn", args, theta=args.theta, delta=args.delta, n=args.n,
                         options={"sampled": args.sampled})
    rows = []
    for n in args.n:
        report = full_mn(args.theta, n, args.delta, seed=args.seed if args.sampled else None,
                         branch_limit=settings.branch_limit)
        data = report.model_dump(exclude={"final_state", "ledger"})
        # a single sampled path carries no bound
        within = None if args.sampled else report.trace_distance <= report.bound + 1e-9
        data.update(ebits_consumed=report.ledger.ebits_consumed, ebits_returned=report.ledger.ebits_returned,
                    net_cost=report.ledger.net_cost, within_bound=within)
        rows.append(data)
    summary = {"all_within_bound": None if args.sampled else all(r["within_bound"] for r in rows)}
    return CommandResult(config, rows, summary)


# ---------------------------------------------------------------------------
# Housekeeping commands
# ---------------------------------------------------------------------------

def cmd_history(argv: list[str]):
    from .runlog import recent_runs, run_stats

    parser = argparse.ArgumentParser(prog="loccost history")
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--stats", action="store_true")
    args = parser.parse_args(argv)
    console = Console()

    if args.stats:
        stats = run_stats()
        console.print(Panel.fit(
            f"[bold]Recorded runs[/bold]: {stats['total']}\n\n"
            + "\n".join(f"{cmd:12} {n}" for cmd, n in stats["by_command"].items())
            + "\n\n" + "\n".join(f"{status:15} {n}" for status, n in stats["by_status"].items()),
            border_style="dim",
        ))
        return

    runs = recent_runs(args.limit)
    if not runs:
        print("No recorded runs")
        return
    table = Table(show_header=True, header_style="bold")
    for column in ("id", "command", "seed", "status", "ms", "started"):
        table.add_column(column)
    for r in runs:
        style = "green" if r["status"] == "ok" else "red"
        table.add_row(str(r["id"]), r["command"], str(r["seed"]), f"[{style}]{r['status']}[/{style}]",
                      str(r["duration_ms"] or ""), str(r["started_at"]))
    console.print(table)


def cmd_config(args: list[str], settings: Settings):
    """Show or modify configuration."""
    console = Console()
    if not args:
        console.print(Panel.fit(
            f"[bold]Current Configuration[/bold]\n\n"
            f"Seed:          [cyan]{settings.seed}[/cyan]\n"
            f"Workers:       [cyan]{settings.workers}[/cyan]\n"
            f"Run store:     [cyan]{settings.db or 'auto (.loccost/runs.db)'}[/cyan]\n"
            f"Branch limit:  [cyan]{settings.branch_limit}[/cyan]\n"
            f"Record runs:   {'[green]enabled[/green]' if settings.record else '[yellow]disabled[/yellow]'}\n"
            f"Log level:     [cyan]{settings.log_level}[/cyan]",
            border_style="dim",
        ))
        return
    if len(args) != 2:
        err_console.print("Usage: loccost config [KEY VALUE]")
        sys.exit(2)
    try:
        key = config_key(args[0])
    except KeyError:
        err_console.print(f"[red]Unknown config key: {args[0]}[/red]")
        sys.exit(2)
    config = load_config()
    config[key] = args[1]
    save_config(config)
    console.print(f"[green]✓[/green] {key}={args[1]}")


ANALYSES = {
    "protocol": cmd_protocol,
    "cost": cmd_cost,
    "markov": cmd_markov,
    "nshot": cmd_nshot,
    "typicality": cmd_typicality,
    "fullmn": cmd_fullmn,
}


def run_analysis(cmd: str, argv: list[str]) -> int:
    """Run one analysis command, print its output and record it. Returns the exit code."""
    started = time.monotonic()
    result, exit_code, settings = None, 0, None
    try:
        settings = load_settings()
        result = ANALYSES[cmd](argv, settings)
        emit(result, result.config.output and Path(result.config.output))
    except ValidationError as e:
        exit_code = 2
        err_console.print(f"[red]Invalid input:[/red] {e}")
    except LoccostError as e:
        exit_code = e.exit_code
        err_console.print(f"[red]{type(e).__name__}:[/red] {e}")
    except Exception as e:
        exit_code = 1
        logger.debug("unhandled error in %s", cmd, exc_info=True)
        err_console.print(f"[red]Internal error ({type(e).__name__}):[/red] {e}")

    if settings is not None and settings.record and "--no-record" not in argv:
        from .runlog import log_run
        from .version import get_local_version

        log_run(
            cmd,
            result.config.model_dump() if result else {"argv": argv},
            result.config.seed if result else None,
            get_local_version(),
            exit_code,
            {k: _plain(v) for k, v in result.summary.items()} if result else None,
            int((time.monotonic() - started) * 1000),
        )
    return exit_code


def main():
    if len(sys.argv) < 2:
        print(USAGE)
        sys.exit(0)

    cmd = sys.argv[1]

    if cmd in ("--help", "-h", "help"):
        print(USAGE)
        sys.exit(0)
    elif cmd in ANALYSES:
        code = run_analysis(cmd, sys.argv[2:])
        if code:
            sys.exit(code)
    elif cmd == "history":
        cmd_history(sys.argv[2:])
    elif cmd == "config":
        try:
            settings = load_settings()
        except ValidationError as e:
            err_console.print(f"[red]Invalid configuration:[/red] {e}")
            sys.exit(2)
        cmd_config(sys.argv[2:], settings)
    elif cmd in ("version", "--version", "-v"):
        from .version import get_local_version
        print(f"loccost {get_local_version()}")
    else:
        err_console.print(f"Unknown command: {cmd}")
        print(USAGE)
        sys.exit(2)


if __name__ == "__main__":
    main()
