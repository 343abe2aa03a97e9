"""Command-line surface: plan, compare, oracle-check, sample-damage.

Every run is a pure function of (scenario file, seed); emitted files use
fixed-width numeric formatting so repeated runs are byte-identical.
Exit codes: 0 success, 1 validation or scenario error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .community import DamageState
from .errors import RecoveryError, ValidationError
from .hazard import sample_initial_damage
from .mdp import MdpConfig, Objective, RepairModel
from .planner import (
    TAG_DAMAGE,
    EpisodeResult,
    PolicyKind,
    RestorationCurve,
    RolloutConfig,
    RolloutMode,
    exhaustive_oracle,
    keyed_seed,
    run_episode,
)
from .scenario import Scenario, load_scenario

_ORACLE_GAP_TOLERANCE = 0.05


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return f"{x:.6f}"


def _metric_label(objective: Objective) -> str:
    if objective is Objective.MIN_TIME_TO_COVERAGE:
        return "time_to_coverage_days"
    return "persons_per_day"


@dataclass(frozen=True)
class RunReport:
    """Everything a run emits, before rendering: per-policy episode results
    and summary statistics, plus the configuration echo."""

    scenario_name: str
    seed: int
    episodes: int
    mdp: MdpConfig
    rollout: RolloutConfig
    results: dict[str, list[EpisodeResult]]
    metrics: dict[str, list[float]]

    def mean_stderr(self, policy: str) -> tuple[float, float]:
        values = self.metrics[policy]
        mean = float(np.mean(values))
        if len(values) < 2:
            return mean, 0.0
        return mean, float(np.std(values, ddof=1)) / math.sqrt(len(values))


def _config_lines(report: RunReport) -> list[str]:
    mdp, rollout = report.mdp, report.rollout
    return [
        f"scenario = {report.scenario_name}",
        f"seed = {report.seed}",
        f"episodes = {report.episodes}",
        f"n_e = {mdp.n_e}",
        f"n_w = {mdp.n_w}",
        f"gamma = {_fmt(mdp.gamma)}",
        f"objective = {mdp.objective.value}",
        f"alpha = {_fmt(mdp.alpha)}",
        f"repair_model = {mdp.repair_model.value}",
        f"horizon = {'auto' if rollout.horizon is None else rollout.horizon}",
        f"n_mc_min = {rollout.n_mc_min}",
        f"n_mc_max = {rollout.n_mc_max}",
        f"se_threshold = {_fmt(rollout.se_threshold)}",
        f"mode = {rollout.mode.value}",
        f"action_cap = {rollout.action_cap}",
    ]


def _curve_text(curve: RestorationCurve) -> str:
    lines = ["time_days,benefitted_persons,epn_frac,wn_frac"]
    for t, b, e, w in curve.points:
        lines.append(f"{t:.6f},{b:.3f},{e:.6f},{w:.6f}")
    return "\n".join(lines) + "\n"


def _trace_text(results: list[EpisodeResult]) -> str:
    lines = []
    for ep, res in enumerate(results):
        for s in res.steps:
            assigned = ",".join(str(i) for i in s.assigned)
            repaired = ",".join(str(i) for i in s.repaired)
            lines.append(
                f"ep {ep} step {s.decision_index} time {_fmt(s.time_days)} "
                f"assigned [{assigned}] repaired [{repaired}] "
                f"reward {_fmt(s.reward)}"
            )
        lines.append(f"ep {ep} done time {_fmt(res.total_time)}")
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _run_policy_episodes(
    scenario: Scenario,
    policy: PolicyKind,
    rollout_cfg: RolloutConfig,
    seed: int,
    episodes: int,
) -> tuple[list[EpisodeResult], list[float]]:
    results: list[EpisodeResult] = []
    metrics: list[float] = []
    for ep in range(episodes):
        damage_rng = np.random.default_rng(keyed_seed(seed, TAG_DAMAGE, ep))
        damage = sample_initial_damage(scenario.community, scenario.hazards, damage_rng)
        res = run_episode(
            policy,
            damage,
            scenario.community,
            scenario.mdp,
            rollout_cfg,
            scenario.base_policy,
            root_seed=seed,
            episode_index=ep,
        )
        results.append(res)
        metrics.append(res.metric(scenario.mdp.objective))
    return results, metrics


def _resolve_common(args: argparse.Namespace) -> tuple[Scenario, int, RolloutConfig]:
    scenario = load_scenario(args.scenario)
    seed = scenario.seed if args.seed is None else args.seed
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must fit in an unsigned 64-bit integer")
    rollout_cfg = scenario.rollout
    mode = getattr(args, "mode", None)
    if mode is not None:
        rollout_cfg = replace(rollout_cfg, mode=RolloutMode(mode))
    episodes = getattr(args, "episodes", 1)
    if episodes < 1:
        raise ValidationError("episodes must be >= 1")
    return scenario, seed, rollout_cfg


def cmd_plan(args: argparse.Namespace) -> int:
    scenario, seed, rollout_cfg = _resolve_common(args)
    policy = PolicyKind(args.policy)
    results, metrics = _run_policy_episodes(
        scenario, policy, rollout_cfg, seed, args.episodes
    )
    report = RunReport(
        scenario_name=scenario.name,
        seed=seed,
        episodes=args.episodes,
        mdp=scenario.mdp,
        rollout=rollout_cfg,
        results={policy.value: results},
        metrics={policy.value: metrics},
    )
    out = Path(args.out)
    for ep, res in enumerate(results):
        _write(out / f"curve_{policy.value}_ep{ep}.csv", _curve_text(res.curve))
    _write(out / f"trace_{policy.value}.txt", _trace_text(results))

    mean, stderr = report.mean_stderr(policy.value)
    label = _metric_label(scenario.mdp.objective)
    lines = _config_lines(report)
    lines.append(f"policy = {policy.value}")
    for ep, m in enumerate(metrics):
        lines.append(f"episode {ep} {label} = {_fmt(m)}")
    lines.append(f"mean_{label} = {_fmt(mean)}")
    lines.append(f"stderr = {_fmt(stderr)}")
    _write(out / "summary_plan.txt", "\n".join(lines) + "\n")
    print(
        f"{policy.value} {label} mean {_fmt(mean)} stderr {_fmt(stderr)} "
        f"({args.episodes} episodes)"
    )
    return 0


def _mean_retailer_recovery(results: list[EpisodeResult]) -> list[float]:
    n_ret = len(results[0].retailer_recovery)
    return [
        float(np.mean([res.retailer_recovery[ri] for res in results]))
        for ri in range(n_ret)
    ]


def cmd_compare(args: argparse.Namespace) -> int:
    scenario, seed, rollout_cfg = _resolve_common(args)
    base_results, base_metrics = _run_policy_episodes(
        scenario, PolicyKind.BASE, rollout_cfg, seed, args.episodes
    )
    roll_results, roll_metrics = _run_policy_episodes(
        scenario, PolicyKind.ROLLOUT, rollout_cfg, seed, args.episodes
    )
    report = RunReport(
        scenario_name=scenario.name,
        seed=seed,
        episodes=args.episodes,
        mdp=scenario.mdp,
        rollout=rollout_cfg,
        results={"base": base_results, "rollout": roll_results},
        metrics={"base": base_metrics, "rollout": roll_metrics},
    )
    base_mean, base_se = report.mean_stderr("base")
    roll_mean, roll_se = report.mean_stderr("rollout")
    if base_mean == 0.0:
        improvement = 0.0
    elif scenario.mdp.objective is Objective.MIN_TIME_TO_COVERAGE:
        improvement = (base_mean - roll_mean) / base_mean * 100.0
    else:
        improvement = (roll_mean - base_mean) / base_mean * 100.0

    label = _metric_label(scenario.mdp.objective)
    lines = _config_lines(report)
    lines.append(f"metric = {label}")
    for ep in range(args.episodes):
        lines.append(
            f"episode {ep} base {_fmt(base_metrics[ep])} "
            f"rollout {_fmt(roll_metrics[ep])}"
        )
    lines.append(f"base_mean = {_fmt(base_mean)} stderr {_fmt(base_se)}")
    lines.append(f"rollout_mean = {_fmt(roll_mean)} stderr {_fmt(roll_se)}")
    lines.append(f"improvement_pct = {_fmt(improvement)}")

    out = Path(args.out)
    _write(out / "compare_summary.txt", "\n".join(lines) + "\n")

    ret_lines = ["retailer_id,base_mean_recovery_days,rollout_mean_recovery_days"]
    base_ret = _mean_retailer_recovery(base_results)
    roll_ret = _mean_retailer_recovery(roll_results)
    for ri, retailer in enumerate(scenario.community.retailers):
        ret_lines.append(
            f"{retailer.id},{_fmt(base_ret[ri])},{_fmt(roll_ret[ri])}"
        )
    _write(out / "compare_retailers.csv", "\n".join(ret_lines) + "\n")
    _write(out / "curve_base_ep0.csv", _curve_text(base_results[0].curve))
    _write(out / "curve_rollout_ep0.csv", _curve_text(roll_results[0].curve))
    print(
        f"base {_fmt(base_mean)} rollout {_fmt(roll_mean)} {label} "
        f"improvement {_fmt(improvement)}%"
    )
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    scenario, seed, rollout_cfg = _resolve_common(args)
    # the oracle needs deterministic repairs; force the model here
    mdp = replace(scenario.mdp, repair_model=RepairModel.REMAINING_WORK)
    damage_rng = np.random.default_rng(keyed_seed(seed, TAG_DAMAGE, 0))
    damage = sample_initial_damage(scenario.community, scenario.hazards, damage_rng)
    optimum, _ = exhaustive_oracle(damage, scenario.community, mdp)
    result = run_episode(
        PolicyKind.ROLLOUT,
        damage,
        scenario.community,
        mdp,
        rollout_cfg,
        scenario.base_policy,
        root_seed=seed,
        episode_index=0,
    )
    achieved = result.metric(mdp.objective)
    if mdp.objective is Objective.MIN_TIME_TO_COVERAGE:
        gap = (achieved - optimum) / optimum if optimum > 0.0 else 0.0
    else:
        gap = (optimum - achieved) / optimum if optimum > 0.0 else 0.0
    verdict = "PASS" if gap <= _ORACLE_GAP_TOLERANCE else "FAIL"
    label = _metric_label(mdp.objective)
    print(f"oracle_optimum {label} {_fmt(optimum)}")
    print(f"rollout {label} {_fmt(achieved)}")
    print(f"gap_pct {_fmt(gap * 100.0)}")
    print(f"{verdict} (tolerance {_fmt(_ORACLE_GAP_TOLERANCE * 100.0)}%)")
    return 0


def cmd_sample_damage(args: argparse.Namespace) -> int:
    scenario, seed, _ = _resolve_common(args)
    rows = ["episode,component_id,damage_state"]
    for ep in range(args.episodes):
        damage_rng = np.random.default_rng(keyed_seed(seed, TAG_DAMAGE, ep))
        damage = sample_initial_damage(scenario.community, scenario.hazards, damage_rng)
        counts = {s: 0 for s in DamageState}
        for comp, state in zip(scenario.community.components, damage):
            counts[state] += 1
            rows.append(f"{ep},{comp.id},{state.name.lower()}")
        damaged = scenario.community.n_components - counts[DamageState.NONE]
        detail = ", ".join(
            f"{s.name.lower()} {counts[s]}"
            for s in DamageState
            if s != DamageState.NONE
        )
        print(
            f"ep {ep}: damaged {damaged}/{scenario.community.n_components} "
            f"({detail})"
        )
    if args.out is not None:
        _write(Path(args.out) / "damage_samples.csv", "\n".join(rows) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recovery-rollout",
        description="Rollout planning for interdependent utility restoration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, episodes_default: int | None) -> None:
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument(
            "--seed", type=int, default=None, help="override the scenario seed"
        )
        if episodes_default is not None:
            sp.add_argument(
                "--episodes", type=int, default=episodes_default,
                help="number of episodes",
            )

    sp = sub.add_parser("plan", help="run one policy and emit curves and traces")
    common(sp, episodes_default=1)
    sp.add_argument(
        "--policy", choices=[p.value for p in PolicyKind], default="rollout"
    )
    sp.add_argument("--mode", choices=[m.value for m in RolloutMode], default=None)
    sp.add_argument("--out", default="out", help="output directory")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser(
        "compare", help="paired base-vs-rollout evaluation on shared noise"
    )
    common(sp, episodes_default=10)
    sp.add_argument("--mode", choices=[m.value for m in RolloutMode], default=None)
    sp.add_argument("--out", default="out", help="output directory")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser(
        "oracle-check",
        help="compare rollout against the exhaustive schedule oracle",
    )
    common(sp, episodes_default=None)
    sp.set_defaults(func=cmd_oracle_check, episodes=1)

    sp = sub.add_parser("sample-damage", help="draw initial damage vectors")
    common(sp, episodes_default=1)
    sp.add_argument("--out", default=None, help="optional output directory")
    sp.set_defaults(func=cmd_sample_damage)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RecoveryError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
