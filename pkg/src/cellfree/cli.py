"""Command-line front end.

Every subcommand reads an optional INI config (``--config``), writes its
files under ``--out`` and prints a short report unless ``--quiet``. Any
error ends the run with one ``error: ...`` line on stderr and a nonzero
status.
"""

import argparse
import configparser
import csv
import dataclasses
import os
import sys
import time

import numpy as np

from .beamforming import InfeasibleError, rate_rows, run_pipeline
from .beamforming.pipeline import RATE_COLUMNS
from .channel import NetworkConfig, sample_channel
from .drl import AgentConfig, flops_report, load_agent, save_agent, table_flops
from .orchestrator import (BEAM_COLUMNS, CLUSTER_COLUMNS, RunPlan, Streams, evaluate_inference,
                           exhaustive_baseline, make_geometry, random_baseline, run_summary,
                           train_beam, train_clustering, train_hierarchical)
from .partitioning import ActionSpaceTooLarge, ConfigSpace, count_report

EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_CAP = 4
EXIT_INFEASIBLE = 5
EXIT_IO = 6
EXIT_INTERNAL = 1


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.10g" % v
    return str(v)


def write_csv(records, path, columns=None):
    """Header plus one row per record; floats with 10 significant digits."""
    records = list(records)
    if columns is None:
        if not records:
            raise ValueError("an empty record set needs explicit columns")
        columns = list(records[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow([format_value(rec[c]) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _convert(raw, default, key):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.replace("x", ",").split(","))
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def _section(parser, name, cls, defaults):
    if not parser.has_section(name):
        return {}
    names = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for key, raw in parser.items(name):
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        default = defaults.get(key)
        out[key] = _convert(raw, default, f"[{name}] {key}") if default is not None else raw
    return out


NETWORK_DEFAULTS = {f.name: f.default for f in dataclasses.fields(NetworkConfig)}
PLAN_FIELDS = {"cluster_algo": "pg", "beam_algo": "sac", "csi_mode": "fixed",
               "episodes_cluster": 1, "steps_cluster": 1, "episodes_beam": 1, "steps_beam": 1,
               "tau": 1, "seed": 0, "geometry_seed": 0, "beam_mode": "conventional",
               "pool_size": 0, "cap": 1}
AGENT_DEFAULTS = {f.name: f.default for f in dataclasses.fields(AgentConfig)}


def load_config(path):
    """Parse an INI file into ``(network kwargs, plan kwargs, agent kwargs)``."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {str(exc).splitlines()[0]}") from None
    for name in parser.sections():
        if name not in ("network", "plan", "agent"):
            raise ConfigError(f"unknown section [{name}] in {path}")
    network = _section(parser, "network", NetworkConfig, NETWORK_DEFAULTS)
    plan = {}
    if parser.has_section("plan"):
        for key, raw in parser.items("plan"):
            if key not in PLAN_FIELDS:
                raise ConfigError(f"unknown key {key!r} in [plan]")
            plan[key] = _convert(raw, PLAN_FIELDS[key], f"[plan] {key}")
    agent = _section(parser, "agent", AgentConfig, AGENT_DEFAULTS)
    return network, plan, agent


def build_plan(args):
    network, plan, agent = load_config(args.config) if args.config else ({}, {}, {})
    if args.seed is not None:
        plan["seed"] = args.seed
    for key in ("cluster_algo", "beam_algo", "csi_mode", "beam_mode"):
        value = getattr(args, key, None)
        if value is not None:
            plan[key] = value
    try:
        net = NetworkConfig(**network)
        agent_cfg = AgentConfig(**agent).validate() if agent else None
        return RunPlan(net=net, agent=agent_cfg, **plan)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _say(args, text):
    if not args.quiet:
        print(text)


def cmd_count_configs(args):
    rep = count_report(args.M, args.K, args.N, args.L)
    lines = [f"enumerated: {rep['enumerated']}",
             f"closed form N!*S(M,N)*S(K,N): {rep['closed_form']}",
             f"theta (N!/sqrt2)^2*S*S: {format_value(rep['theta'])}"]
    issues = []
    if not rep["closed_matches"]:
        issues.append("enumerated count differs from N!*S*S (cluster size cap L)")
    if not rep["theta_matches"]:
        issues.append("theta differs from the enumerated count")
    lines.append("discrepancy: " + ("; ".join(issues) if issues else "none"))
    print("\n".join(lines))
    return 0


def cmd_flops(args):
    if args.state is not None:
        rep = flops_report(args.state, args.action)
        print(f"layer sum 2*(256*S + 128*A + 32768): {rep['layer_sum']}")
        print(f"table form 32768 + 256*K + 128*A: {rep['table_form']}")
        return 0
    print("K,layer_sum,table_form,table_form_ac")
    for k in range(1, 11):
        rep = flops_report(k, args.action)
        print(f"{k},{rep['layer_sum']},{rep['table_form']},"
              f"{table_flops(k, args.action, networks=2)}")
    return 0


def cmd_simulate(args):
    plan = build_plan(args)
    space = ConfigSpace.for_network(plan.net, plan.cap)
    clusters = space[args.config_index]
    geom = make_geometry(plan)
    rng = np.random.default_rng(Streams(plan.seed)["csi"])
    rows, report = [], ["tx_dbm,hybrid_mean,conventional_mean"]
    channel_draws = [sample_channel(geom, plan.net, rng, slot_index=s) for s in range(args.draws)]
    for p in args.powers:
        net = plan.net.with_(tx_power_dbm=p)
        means = {}
        for kind in ("hybrid", "conventional"):
            totals = []
            for s, ch in enumerate(channel_draws):
                res = run_pipeline(net, clusters, ch, kind, seed=plan.seed)
                for r in rate_rows(plan.seed, s, args.config_index, res, kind):
                    rows.append({"tx_dbm": p, **r})
                totals.append(res.sum_rate)
            means[kind] = float(np.mean(totals))
        report.append(f"{format_value(float(p))},{format_value(means['hybrid'])},"
                      f"{format_value(means['conventional'])}")
    write_csv(rows, _out_path(args, "simulate.csv"), ("tx_dbm", *RATE_COLUMNS))
    _say(args, "\n".join(report))
    return 0


def _apply_counts(plan, args):
    changes = {k: getattr(args, k) for k in ("episodes_cluster", "steps_cluster",
                                              "episodes_beam", "steps_beam")
               if getattr(args, k, None) is not None}
    try:
        return plan.with_(**changes) if changes else plan
    except ValueError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from None


def cmd_train_cluster(args):
    plan = _apply_counts(build_plan(args), args)
    start = time.perf_counter()
    agent, log, env = train_clustering(plan)
    write_csv(log.records, _out_path(args, "cluster_log.csv"), CLUSTER_COLUMNS)
    save_agent(agent, _out_path(args, "cluster_agent.npz"))
    exhaustive = None
    if plan.csi_mode == "fixed":
        exhaustive = exhaustive_baseline(plan.net, env.schedule.pool[0], env.pipeline,
                                         env.solver_seed, plan.cap)
    summary = run_summary(plan, log, exhaustive, wall_clock=time.perf_counter() - start)
    with open(_out_path(args, "summary.txt"), "w") as fh:
        fh.write(summary)
    _say(args, summary.rstrip())
    return 0


def cmd_train_beam(args):
    plan = _apply_counts(build_plan(args), args)
    space = ConfigSpace.for_network(plan.net, plan.cap)
    clusters = space[args.config_index]
    if not 0 <= args.cluster < clusters.n_clusters:
        raise ConfigError(f"cluster {args.cluster} out of range [0, {clusters.n_clusters})")
    start = time.perf_counter()
    agent, env, log, obs = train_beam(plan, clusters, args.cluster)
    write_csv(log.records, _out_path(args, "beam_log.csv"), BEAM_COLUMNS)
    save_agent(agent, _out_path(args, "beam_agent.npz"))
    ep = log.episode_rewards()
    lines = [f"beam algorithm: {plan.beam_algo}", f"episodes: {len(ep)}",
             f"final-100 mean reward: {ep[-100:].mean():.6g}"]
    if env.schedule.pool is not None:
        value = env.objective(agent.mean_action(obs), env.schedule.pool[0], index=0)
        lines.append(f"mean-action reward: {value:.6g}")
    lines.append(f"wall-clock s: {time.perf_counter() - start:.3f}")
    summary = "\n".join(lines) + "\n"
    with open(_out_path(args, "summary.txt"), "w") as fh:
        fh.write(summary)
    _say(args, summary.rstrip())
    return 0


def cmd_train_hier(args):
    plan = _apply_counts(build_plan(args), args)
    result = train_hierarchical(plan)
    write_csv(result.cluster_log.records, _out_path(args, "cluster_log.csv"), CLUSTER_COLUMNS)
    write_csv(result.beam_log.records, _out_path(args, "beam_log.csv"), BEAM_COLUMNS)
    save_agent(result.cluster_agent, _out_path(args, "cluster_agent.npz"))
    for n, agent in sorted(result.beam_agents.items()):
        save_agent(agent, _out_path(args, f"beam_agent_{n}.npz"))
    summary = run_summary(plan, result.cluster_log, wall_clock=result.wall_clock)
    with open(_out_path(args, "summary.txt"), "w") as fh:
        fh.write(summary)
    _say(args, summary.rstrip())
    return 0


def cmd_eval(args):
    plan = build_plan(args)
    try:
        agent = load_agent(args.agent)
    except OSError as exc:
        raise OSError(f"cannot read agent {args.agent}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad agent file {args.agent}: {exc}") from None
    if not agent.discrete:
        raise ConfigError("eval expects a clustering agent")
    slots = args.slots
    trained = evaluate_inference(agent, plan, slots=slots)
    rand = random_baseline(plan, slots=slots)
    rows = [{"policy": "agent", "mean_reward": trained["mean_reward"],
             "mean_per_ue_bps": trained["mean_per_ue_bps"], "slots": slots},
            {"policy": "random", "mean_reward": rand["mean_reward"],
             "mean_per_ue_bps": rand["mean_per_ue_bps"], "slots": slots}]
    if plan.csi_mode == "fixed":
        geom = make_geometry(plan)
        ex = exhaustive_baseline(plan.net, sample_channel(geom, plan.net), cap=plan.cap,
                                 seed=Streams(plan.seed)["solver"])
        rows.append({"policy": "exhaustive", "mean_reward": ex.best_value,
                     "mean_per_ue_bps": float(ex.per_ue_bps[ex.best_index]), "slots": 1})
    write_csv(rows, _out_path(args, "eval.csv"), ("policy", "mean_reward", "mean_per_ue_bps", "slots"))
    _say(args, "\n".join(f"{r['policy']}: reward {r['mean_reward']:.6g}, "
                         f"per-UE {r['mean_per_ue_bps']:.6g} bps/Hz" for r in rows))
    return 0


class Parser(argparse.ArgumentParser):
    """Reports usage errors on a single line."""

    def error(self, message):
        usage = " ".join(self.format_usage().split())
        raise UsageError(f"{message} ({usage})")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--config", default=None, help="INI file with [network], [plan], [agent]")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--quiet", action="store_true", help="no stdout report")


def _counts(p):
    for name in ("episodes-cluster", "steps-cluster", "episodes-beam", "steps-beam"):
        p.add_argument(f"--{name}", type=int, default=None)


def build_parser():
    parser = Parser(prog="cellfree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("count-configs", help="size of the clustering action space")
    for name in ("M", "K", "N"):
        p.add_argument(name, type=int)
    p.add_argument("L", type=int, nargs="?", default=None, help="max UEs per cluster")
    p.set_defaults(func=cmd_count_configs)

    p = sub.add_parser("flops", help="inference FLOPs of one policy network")
    p.add_argument("--state", type=int, default=None)
    p.add_argument("--action", type=int, default=1)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("simulate", help="hybrid vs conventional sum rate over tx power")
    _common(p)
    p.add_argument("--powers", type=float, nargs="+", default=[20.0, 25.0, 30.0, 35.0, 40.0])
    p.add_argument("--draws", type=int, default=10)
    p.add_argument("--config-index", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-cluster", help="train the clustering agent")
    _common(p)
    _counts(p)
    p.add_argument("--cluster-algo", default=None)
    p.add_argument("--csi-mode", default=None)
    p.add_argument("--beam-mode", default=None, choices=("hybrid", "conventional"))
    p.set_defaults(func=cmd_train_cluster)

    p = sub.add_parser("train-beam", help="train one cluster's beamsteering agent")
    _common(p)
    _counts(p)
    p.add_argument("--beam-algo", default=None)
    p.add_argument("--csi-mode", default=None)
    p.add_argument("--config-index", type=int, default=0)
    p.add_argument("--cluster", type=int, default=0)
    p.set_defaults(func=cmd_train_beam)

    p = sub.add_parser("train-hier", help="hierarchical clustering + beamsteering training")
    _common(p)
    _counts(p)
    p.add_argument("--cluster-algo", default=None)
    p.add_argument("--beam-algo", default=None)
    p.add_argument("--csi-mode", default=None)
    p.add_argument("--beam-mode", default=None)
    p.set_defaults(func=cmd_train_hier)

    p = sub.add_parser("eval", help="inference-mode evaluation of a clustering agent")
    _common(p)
    p.add_argument("--agent", required=True, help="cluster_agent.npz from a training run")
    p.add_argument("--slots", type=int, default=200)
    p.add_argument("--csi-mode", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def run(argv=None):
    """Parse ``argv`` and run the subcommand; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        code, msg = EXIT_USAGE, f"usage error: {exc}"
    except ActionSpaceTooLarge as exc:
        code, msg = EXIT_CAP, str(exc)
    except (InfeasibleError, RuntimeError) as exc:
        code, msg = EXIT_INFEASIBLE, f"infeasible: {exc}"
    except (ConfigError, ValueError, IndexError, TypeError) as exc:
        code, msg = EXIT_CONFIG, f"invalid input: {exc}"
    except OSError as exc:
        code, msg = EXIT_IO, f"i/o failure: {exc}"
    except Exception as exc:  # anything unexpected still gets one line
        code, msg = EXIT_INTERNAL, f"internal error: {type(exc).__name__}: {exc}"
    print("error: " + " ".join(str(msg).split()), file=sys.stderr)
    return code


def main():
    return run(sys.argv[1:])
