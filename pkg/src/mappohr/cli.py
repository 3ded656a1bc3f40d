"""Command line: ``mappohr {gen,train,eval,bench,replay}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .env import EnvConfig, read_trace
from .harness.metrics import metrics_from_trace
from .harness.policies import LearnedPolicy, PureReplanner, RuleOnlyPolicy
from .harness.runner import baseline_env_config, run_episode, run_suite
from .harness.suite import SuiteParams, generate_suite, load_suite, write_suite
from .harness.variants import VARIANTS, get_variant
from .mappo.train import CheckpointError, TrainConfig, TrainingDiverged, load_checkpoint, train

log = logging.getLogger("mappohr")

ENV_FIELDS = {f.name: f for f in dataclasses.fields(EnvConfig)}
TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


class ConfigError(ValueError):
    pass


def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "on", "yes"):
            return True
        if value.lower() in ("0", "false", "off", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(default, frozenset):
        items = [v.strip() for v in value.split(",") if v.strip()]
        return frozenset(int(v) if v.isdigit() else v for v in items)
    if default is None or isinstance(default, float):
        return None if value.lower() == "none" else float(value)
    if isinstance(default, int):
        return int(value)
    return value


def read_config(path: str) -> tuple[dict, dict]:
    """``key = value`` lines (``#`` comments) split into EnvConfig and TrainConfig overrides."""
    env, tr = {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                if key in TRAIN_FIELDS:
                    tr[key] = _coerce(value, getattr(TrainConfig(), key))
                elif key in ENV_FIELDS:
                    env[key] = _coerce(value, getattr(EnvConfig(), key))
                else:
                    raise ConfigError(f"unknown key {key!r}")
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return env, tr


def on_off(value: str) -> bool:
    return _coerce(value, True)


def build_configs(args) -> tuple[EnvConfig, TrainConfig]:
    """Defaults, then the variant, then the config file, then explicit flags."""
    env_cfg, train_cfg = EnvConfig(), TrainConfig()
    variant = getattr(args, "variant", None)
    if variant:
        v = get_variant(variant)
        env_cfg, train_cfg = v.env_config(env_cfg), v.train_config(train_cfg)
    if getattr(args, "config", None):
        env_o, tr_o = read_config(args.config)
        env_cfg = dataclasses.replace(env_cfg, **env_o)
        train_cfg = dataclasses.replace(train_cfg, **tr_o)
    env_o = {}
    if args.deterministic_timing:
        env_o["deterministic_timing"] = True
    for flag, key in (("rules", "rules"), ("heuristic_mask", "heuristic"), ("rule_penalty", "rule_penalty")):
        if getattr(args, flag, None) is not None:
            env_o[key] = getattr(args, flag)
    env_cfg = dataclasses.replace(env_cfg, **env_o)
    tr_o = {"seed": args.seed}
    for key in ("share_critic", "total_steps", "lr"):
        if getattr(args, key, None) is not None:
            tr_o[key] = getattr(args, key)
    return env_cfg, dataclasses.replace(train_cfg, **tr_o)


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    params = SuiteParams(height=args.height, width=args.width, blocks=args.blocks)
    suite = generate_suite(args.seed, args.cases, args.rate, params)
    write_suite(suite, args.out)
    print(f"wrote {len(suite)} cases to {args.out}: {sum(suite.conflicted)} conflicted (rate {suite.conflict_rate:.2f})")
    return 0


def cmd_train(args) -> int:
    env_cfg, train_cfg = build_configs(args)
    suite = load_suite(args.suite)
    os.makedirs(args.out, exist_ok=True)
    curve = os.path.join(args.out, "curve.csv")
    ck = os.path.join(args.out, "checkpoint.npz")

    def progress(info):
        if info["update"] % 10 == 0:
            log.info("update %d steps %d reward %.2f success %.2f", info["update"], info["env_steps"], info["mean_reward"], info["success"])

    try:
        res = train(suite.scenarios, train_cfg, env_cfg, curve, ck, progress)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}; last good parameters saved to {ck}", file=sys.stderr)
        return 3
    with open(os.path.join(args.out, "config.json"), "w") as fh:
        json.dump({"env": dataclasses.asdict(env_cfg), "train": dataclasses.asdict(train_cfg)}, fh, indent=2, default=sorted)
    print(f"{res.updates} updates, {res.env_steps} env steps; checkpoint {ck}, curve {curve}")
    return 0


def _policy(args, env_cfg: EnvConfig):
    if args.policy == "replanner":
        return PureReplanner(), baseline_env_config(env_cfg)
    if args.policy == "rules":
        return RuleOnlyPolicy(), dataclasses.replace(env_cfg, rules=True, heuristic=True)
    if not args.checkpoint:
        raise CheckpointError("--checkpoint is required for the learned policy")
    actor, _, meta = load_checkpoint(args.checkpoint)
    # evaluate under the rule set the policy was trained with unless overridden
    trained = meta.get("env", {})
    over = {k: trained[k] for k in ("rules", "heuristic", "lookahead") if k in trained and getattr(args, "rules", None) is None}
    env_cfg = dataclasses.replace(env_cfg, **over)
    return LearnedPolicy(actor, greedy=args.greedy, seed=args.seed), env_cfg


def _report(policy, env_cfg, suite, args, csv_path):
    for sc in suite.scenarios:
        if isinstance(policy, LearnedPolicy) and policy.actor.obs_dim != env_cfg.obs_dim(len(sc.agents)):
            raise CheckpointError(
                f"checkpoint expects {policy.actor.obs_dim}-dimensional observations, {sc.name} gives {env_cfg.obs_dim(len(sc.agents))}"
            )
    return run_suite(policy, suite.scenarios, env_cfg, args.speed, csv_path)


def cmd_eval(args) -> int:
    env_cfg, _ = build_configs(args)
    suite = load_suite(args.suite)
    policy, env_cfg = _policy(args, env_cfg)
    report = _report(policy, env_cfg, suite, args, args.out)
    print(report.format_table())
    for case, err in report.errors.items():
        print(f"{case}: {err}", file=sys.stderr)
    if args.traces:
        os.makedirs(args.traces, exist_ok=True)
        if isinstance(policy, LearnedPolicy):
            policy.episodes = 0
        for sc in suite.scenarios:
            try:
                _, _, env = run_episode(policy, sc, env_cfg, args.speed)
            except Exception:  # noqa: BLE001 - already reported above
                continue
            env.write_trace(os.path.join(args.traces, f"{sc.name}.jsonl"))
    if args.min_success is not None and report.success_rate < args.min_success:
        return 2
    return 0


def cmd_bench(args) -> int:
    env_cfg, _ = build_configs(args)
    suite = load_suite(args.suite)
    out = {}
    kinds = ["replanner", "rules"] + (["learned"] if args.checkpoint else [])
    for kind in kinds:
        args.policy = kind
        policy, cfg = _policy(args, env_cfg)
        csv_path = os.path.join(args.out, f"{kind}.csv") if args.out else None
        if args.out:
            os.makedirs(args.out, exist_ok=True)
        report = _report(policy, cfg, suite, args, csv_path)
        out[kind] = report
        print(f"== {kind}")
        print(report.format_table())
    print("== summary")
    for kind, rep in out.items():
        print(f"{kind:<10} total {rep.total:10.2f}  success {rep.success_rate:.2f}")
    return 0


def render_trace(trace: list[dict]) -> str:
    header = trace[0]
    ids = header["agents"]
    lines = [f"agents {' '.join(ids)}; global lengths {header['global_length']}"]
    lines.append("t=0  " + "  ".join(f"{i}@{tuple(c)}" for i, c in zip(ids, header["cells"])))
    for row in trace[1:]:
        parts = []
        for k, i in enumerate(ids):
            flag = " COLLIDED" if row["collided"][k] else (" GOAL" if row["reached"][k] else "")
            ex = row["executed"][k]
            asked = row["actions"][k]
            act = ex if ex == asked else f"{asked}->{ex}"
            parts.append(f"{i}:{act:<6}@{tuple(row['cells'][k])} r={row['rewards'][k]:+.3f}{flag}")
        lines.append(f"t={row['t']:<3}" + "  ".join(parts))
    m = metrics_from_trace(trace)
    lines.append(f"added {m.added_moving_cost:.2f} planning {m.planning_cost:.3f} waiting {m.waiting_cost:.0f} success {int(m.success)}")
    return "\n".join(lines)


def cmd_replay(args) -> int:
    print(render_trace(read_trace(args.trace)))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mappohr", description="Multi-robot conflict avoidance with rule-masked MAPPO.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="key = value file with EnvConfig/TrainConfig fields")
        sp.add_argument("--deterministic-timing", action="store_true", help="charge planning by expansions, not wall clock")

    def rule_flags(sp):
        sp.add_argument("--rules", type=on_off, metavar="on|off")
        sp.add_argument("--heuristic-mask", type=on_off, metavar="on|off", help="allow the Replan action")
        sp.add_argument("--rule-penalty", type=float)

    g = sub.add_parser("gen", help="generate a scenario suite")
    common(g)
    g.add_argument("--out", required=True)
    g.add_argument("--cases", type=int, default=10)
    g.add_argument("--rate", type=float, default=0.9, help="target conflict rate")
    g.add_argument("--height", type=int, default=40)
    g.add_argument("--width", type=int, default=60)
    g.add_argument("--blocks", type=int, default=6)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a MAPPO variant")
    common(t)
    rule_flags(t)
    t.add_argument("--suite", required=True, help="directory written by gen")
    t.add_argument("--out", required=True)
    t.add_argument("--variant", default="MAPPOHR", choices=sorted(VARIANTS))
    t.add_argument("--share-critic", type=on_off, metavar="on|off")
    t.add_argument("--total-steps", type=int)
    t.add_argument("--lr", type=float)
    t.set_defaults(func=cmd_train)

    for name, func, helptext in (("eval", cmd_eval, "evaluate one policy on a suite"), ("bench", cmd_bench, "baselines vs learned")):
        e = sub.add_parser(name, help=helptext)
        common(e)
        rule_flags(e)
        e.add_argument("--suite", required=True)
        e.add_argument("--checkpoint")
        e.add_argument("--greedy", action="store_true", help="argmax actions instead of seeded sampling")
        e.add_argument("--speed", type=float, default=1.0, help="cells per second for the planning cost")
        e.add_argument("--out", help="CSV path (eval) or directory (bench)")
        if name == "eval":
            e.add_argument("--policy", default="learned", choices=("learned", "replanner", "rules"))
            e.add_argument("--traces", help="directory for per-case trace files")
            e.add_argument("--min-success", type=float, help="exit 2 below this success rate")
        e.set_defaults(func=func)

    r = sub.add_parser("replay", help="render a trace file step by step")
    r.add_argument("trace")
    r.set_defaults(func=cmd_replay, seed=0, deterministic_timing=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
