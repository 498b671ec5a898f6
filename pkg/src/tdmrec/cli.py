"""Command-line front end: one subcommand per pipeline stage.

Artifacts are flat files in ``--out``.  Each subcommand also writes
``<subcommand>.manifest.json`` recording sha256 hashes of its inputs and
outputs, the effective config, the seed and the tool version.  Consumers
check those hashes so a stale or edited upstream artifact is reported
instead of silently used.

Exit status: 0 success, 1 validation error (config, schema, missing
artifact), 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import fields

from . import __version__
from .demand import (LinkFlow, assign_od_to_links, calibrate_scale, extract_od, link_flows, read_counts,
                     read_flows, read_od, vehicle_flows, write_flows, write_od)
from .errors import (ConfigError, MissingArtifactError, RowError, SchemaError, TooManyRowErrors)
from .ingest import (build_trajectories, merged_mapping, parse_cdr, parse_towers, read_trajectories,
                     write_trajectories)
from .network import BprParams, load_network
from .nextloc import RnnParams, evaluate, fit_markov, fit_rnn, predict_frequent, predict_markov, predict_rnn
from .nextloc.evaluate import to_resolution
from .optimizer import Traveler, plan_from_json
from .pipeline import candidate_scores, fit_preferences, make_travelers, recommend, substream, tourists
from .preference import Hyperparams, load_model, save_model
from .scenario import (ScenarioConfig, links_csv, results_csv, simulate, sweep_compliance, sweep_theta)
from .synthetic import SyntheticSpec, generate, spec_from_dict, spec_to_dict

log = logging.getLogger("tdmrec")

DEFAULTS = {
    "home_country": "AD",
    "slots": [9, 10, 11],
    "paths": {
        "cdr": "cdr.csv", "towers": "towers.csv", "nodes": "nodes.csv", "links": "links.csv",
        "node_towers": "node_towers.csv", "counts": "counts.csv",
    },
    "ingest": {"max_error_fraction": 0.01},
    "preference": {f.name: f.default for f in fields(Hyperparams)},
    "optimizer": {"theta": 0.0, "off_slot_factor": 0.5, "allow_null": True, "candidates": None,
                  "trips_per_traveler": 1.0},
    "scenario": {"compliance_rate": 1.0, "rho_grid": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
                 "theta_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
                 "peak_slots": None, "bpr": {"alpha": 0.15, "beta": 4.0}},
    "rnn": {f.name: f.default for f in fields(RnnParams)},
    "synthetic": {k: v for k, v in spec_to_dict(SyntheticSpec()).items() if k != "seed"},
}

# artifact -> subcommand that produces it
PRODUCER = {
    "trajectories.csv": "ingest",
    "od.csv": "od", "od_background.csv": "od",
    "flows.csv": "assign", "background.csv": "assign",
    "travelers.csv": "fit-pref", "model.json": "fit-pref",
    "plan.json": "recommend", "baseline.json": "recommend",
}


# -- config -------------------------------------------------------------------

def _merge(base, doc, path, problems):
    for key, val in doc.items():
        where = f"{path}.{key}" if path else key
        if key == "seed" and not path:
            base[key] = val
        elif key not in base:
            problems.append(f"{where}: unknown field")
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                problems.append(f"{where}: expected an object")
            else:
                _merge(base[key], val, where, problems)
        else:
            base[key] = val


def _in_range(problems, where, x, lo=-math.inf, hi=math.inf):
    if not isinstance(x, (int, float)) or isinstance(x, bool) or not lo <= x <= hi:
        problems.append(f"{where}: expected a number in [{lo}, {hi}], got {x!r}")


def load_config(path=None, seed=None) -> dict:
    """Merge a JSON config over the defaults and validate it.

    Raises :class:`ConfigError` listing every problem with its field path.
    """
    cfg = copy.deepcopy(DEFAULTS)
    problems: list[str] = []
    base_dir = None
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError([f"<root>: not valid JSON ({exc})"]) from None
        if not isinstance(doc, dict):
            raise ConfigError(["<root>: expected an object"])
        _merge(cfg, doc, "", problems)
        base_dir = os.path.dirname(os.path.abspath(path))
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        problems.append("seed: required (pass --seed or set it in the config)")
    elif not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0:
        problems.append(f"seed: expected a non-negative integer, got {cfg['seed']!r}")
    cfg["_base_dir"] = base_dir

    slots = cfg["slots"]
    if not isinstance(slots, list) or not slots or any(not isinstance(t, int) or not 0 <= t < 24 for t in slots):
        problems.append("slots: expected a non-empty list of hours in [0, 23]")
    elif len(set(slots)) != len(slots):
        problems.append("slots: duplicate hours")
    _in_range(problems, "ingest.max_error_fraction", cfg["ingest"]["max_error_fraction"], 0, 1)

    for section, cls in (("preference", Hyperparams), ("rnn", RnnParams)):
        try:
            cls(**cfg[section])
        except (TypeError, ValueError) as exc:
            problems.append(f"{section}: {exc}")
    opt = cfg["optimizer"]
    _in_range(problems, "optimizer.theta", opt["theta"], -1)
    _in_range(problems, "optimizer.off_slot_factor", opt["off_slot_factor"], 0, 1)
    _in_range(problems, "optimizer.trips_per_traveler", opt["trips_per_traveler"], 1e-12)
    if opt["candidates"] is not None and (not isinstance(opt["candidates"], int) or opt["candidates"] < 1):
        problems.append("optimizer.candidates: expected a positive integer or null")
    sc = cfg["scenario"]
    _in_range(problems, "scenario.compliance_rate", sc["compliance_rate"], 0, 1)
    if not isinstance(sc["rho_grid"], list) or not sc["rho_grid"]:
        problems.append("scenario.rho_grid: expected a non-empty list")
    else:
        for i, r in enumerate(sc["rho_grid"]):
            _in_range(problems, f"scenario.rho_grid[{i}]", r, 0, 1)
    if not isinstance(sc["theta_grid"], list):
        problems.append("scenario.theta_grid: expected a list")
    else:
        for i, t in enumerate(sc["theta_grid"]):
            _in_range(problems, f"scenario.theta_grid[{i}]", t, -1)
        if sc["theta_grid"] != sorted(sc["theta_grid"], key=float):
            problems.append("scenario.theta_grid: must be sorted ascending")
    try:
        BprParams(**sc["bpr"])
    except (TypeError, ValueError) as exc:
        problems.append(f"scenario.bpr: {exc}")
    try:
        spec_from_dict({**cfg["synthetic"], "seed": cfg.get("seed", 0)}).validate()
    except (TypeError, ValueError) as exc:
        problems.append(f"synthetic: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg


# -- artifacts ------------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Book-keeping for one subcommand invocation."""

    def __init__(self, command, cfg, out, data=None):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.data = data or out
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        os.makedirs(out, exist_ok=True)

    def raw(self, key) -> str:
        """Path of a raw input named in ``paths``; must exist."""
        name = self.cfg["paths"][key]
        base = self.cfg["_base_dir"] if self.cfg["_base_dir"] and not os.path.isabs(name) else self.data
        path = name if os.path.isabs(name) else os.path.join(base, name)
        if not os.path.exists(path) and base != self.data:
            path = os.path.join(self.data, name)
        if not os.path.exists(path):
            raise ConfigError([f"paths.{key}: file not found: {path}"])
        self.inputs[f"paths.{key}"] = sha256_file(path)
        return path

    def artifact(self, name) -> str:
        """Path of an upstream artifact, checked against its producer's manifest."""
        producer = PRODUCER[name]
        path = os.path.join(self.out, name)
        if not os.path.exists(path):
            raise MissingArtifactError(
                f"missing {name} in {self.out}; run `tdmrec {producer}` first (cmd_{producer.replace('-', '_')})")
        digest = sha256_file(path)
        manifest = os.path.join(self.out, f"{producer}.manifest.json")
        if os.path.exists(manifest):
            with open(manifest, encoding="utf-8") as fh:
                recorded = json.load(fh).get("outputs", {}).get(name)
            if recorded is not None and recorded != digest:
                raise MissingArtifactError(
                    f"{name} does not match the hash recorded by `tdmrec {producer}`; rerun {producer}")
        self.inputs[name] = digest
        return path

    def write(self, name, text: str):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        self.outputs[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return path

    def finish(self, sections=()):
        config = {k: self.cfg[k] for k in ("home_country", "slots", *sections)}
        doc = {
            "command": self.command,
            "tool": "tdmrec",
            "version": __version__,
            "seed": self.cfg["seed"],
            "config": config,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
        }
        self.write(f"{self.command}.manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _network(run):
    return load_network(run.raw("nodes"), run.raw("links"), run.raw("node_towers"))


def _travelers_csv(travelers):
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("user_id", "origin", "preferred_slot"))
    for tr in travelers:
        w.writerow((tr.user_id, tr.origin, tr.preferred_slot))
    return buf.getvalue()


def _read_travelers(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [Traveler(r["user_id"], r["origin"], int(r["preferred_slot"])) for r in csv.DictReader(fh)]


def _scenario_config(cfg, rho=None) -> ScenarioConfig:
    sc, opt = cfg["scenario"], cfg["optimizer"]
    return ScenarioConfig(
        compliance_rate=float(sc["compliance_rate"] if rho is None else rho),
        theta=float(opt["theta"]),
        bpr=BprParams(**sc["bpr"]),
        seed=substream(cfg["seed"], "scenario"),
        trips_per_traveler=float(opt["trips_per_traveler"]),
        slots=tuple(cfg["slots"]),
        peak_slots=tuple(sc["peak_slots"]) if sc["peak_slots"] else None,
        off_slot_factor=float(opt["off_slot_factor"]),
    )


def _plans_inputs(run):
    network = _network(run)
    travelers = _read_travelers(run.artifact("travelers.csv"))
    model = load_model(run.artifact("model.json"))
    background = vehicle_flows(read_flows(run.artifact("background.csv")))
    return network, travelers, candidate_scores(model, travelers), background


# -- subcommands -----------------------------------------------------------------

def cmd_gen_synthetic(run):
    spec = spec_from_dict({**run.cfg["synthetic"], "seed": run.cfg["seed"]})
    ds = generate(spec)
    for name, path in sorted(ds.write(run.out).items()):
        with open(path, "rb") as fh:
            run.outputs[name] = hashlib.sha256(fh.read()).hexdigest()
    run.finish(("synthetic",))
    print(f"wrote {len(ds.records)} CDR records for {spec.n_travelers} travelers to {run.out}")


def cmd_ingest(run):
    parsed = parse_cdr(run.raw("cdr"), run.cfg["ingest"]["max_error_fraction"])
    towers = parse_towers(run.raw("towers"))
    errors: list = []
    trajectories = build_trajectories(parsed.records, towers, errors)
    run.write("trajectories.csv", write_trajectories(trajectories))
    report = {"records": len(parsed.records), "malformed_rows": [str(e) for e in parsed.errors],
              "unknown_tower_records": len(errors), "users": len(trajectories)}
    run.write("ingest_report.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    run.finish(("ingest",))
    print(f"{len(trajectories)} trajectories from {len(parsed.records)} records "
          f"({len(parsed.errors)} malformed rows skipped)")


def cmd_od(run):
    network = _network(run)
    trajectories = read_trajectories(run.artifact("trajectories.csv"))
    residents = [t for t in trajectories if t.nationality == run.cfg["home_country"]]
    od = extract_od(trajectories, network.node_of_tower)
    run.write("od.csv", write_od(od))
    run.write("od_background.csv", write_od(extract_od(residents, network.node_of_tower)))
    run.finish()
    print(f"{sum(m.total for m in od)} trips in {len(od)} hourly bins")


def cmd_assign(run):
    network = _network(run)
    counts = read_counts(run.raw("counts"))
    od = read_od(run.artifact("od.csv"))
    od_bg = read_od(run.artifact("od_background.csv"))
    unroutable: list = []
    R = assign_od_to_links(od, network, unroutable)
    errors: list = []
    betas = calibrate_scale(R, counts, errors)
    for e in errors:
        log.warning("%s", e)
    run.write("flows.csv", write_flows(link_flows(R, betas)))
    R_bg = assign_od_to_links(od_bg, network, unroutable)
    run.write("background.csv", write_flows(LinkFlow(l, t, r, betas[(l, t)]) for (l, t), r in R_bg.items()))
    run.finish()
    print(f"{len(R)} link-hour flows calibrated against {len(counts)} counts "
          f"({len(unroutable)} unroutable O-D cells)")


def cmd_fit_pref(run):
    network = _network(run)
    trajectories = read_trajectories(run.artifact("trajectories.csv"))
    tt = tourists(trajectories, run.cfg["home_country"], min_towers=True)
    if not tt:
        raise ConfigError([f"home_country: no travelers left after removing {run.cfg['home_country']!r} users"])
    travelers = make_travelers(tt, network.node_of_tower, run.cfg["slots"])
    hp = Hyperparams(**run.cfg["preference"])
    model = fit_preferences(tt, travelers, network, hp, substream(run.cfg["seed"], "preference"))
    run.write("travelers.csv", _travelers_csv(travelers))
    buf = io.StringIO()
    save_model(model, buf)
    run.write("model.json", buf.getvalue())
    run.finish(("preference",))
    print(f"fitted k={model.k} factors for {len(travelers)} travelers; final loss {model.loss_history[-1]:.6g}")


def cmd_recommend(run):
    network, travelers, scores, background = _plans_inputs(run)
    opt = run.cfg["optimizer"]
    plans = recommend(travelers, scores, network, background, run.cfg["slots"], opt["theta"],
                      opt["trips_per_traveler"], opt["off_slot_factor"], opt["allow_null"])
    run.write("plan.json", plans.optimized.to_json(network) + "\n")
    run.write("baseline.json", plans.baseline.to_json(network) + "\n")
    run.finish(("optimizer",))
    p = plans.optimized
    print(f"objective {p.objective:.6g} (preference-only {plans.baseline.objective:.6g}); "
          f"{p.satisfied_count}/{len(travelers)} travelers get their first choice")


def _load_plans(run):
    with open(run.artifact("plan.json"), encoding="utf-8") as fh:
        plan = plan_from_json(fh.read())
    with open(run.artifact("baseline.json"), encoding="utf-8") as fh:
        baseline = plan_from_json(fh.read())
    return plan, baseline


def cmd_simulate(run):
    network, travelers, scores, background = _plans_inputs(run)
    plan, baseline = _load_plans(run)
    res = simulate(_scenario_config(run.cfg), plan, baseline, travelers, network, background, scores)
    run.write("scenario.csv", results_csv([res]))
    run.write("scenario_link_profile.csv", links_csv([res]))
    run.finish(("optimizer", "scenario"))
    print(f"rho={res.rho}: avg delay {res.avg_delay:.4f} min, idealized {res.idealized_count} "
          f"(score {res.idealized_score:.6g})")


def cmd_sweep(run):
    network, travelers, scores, background = _plans_inputs(run)
    plan, baseline = _load_plans(run)
    cfg = _scenario_config(run.cfg)
    results = sweep_compliance(cfg, [float(r) for r in run.cfg["scenario"]["rho_grid"]], plan, baseline,
                               travelers, network, background, scores)
    run.write("results.csv", results_csv(results))
    run.write("link_profile.csv", links_csv(results))
    theta_grid = [float(t) for t in run.cfg["scenario"]["theta_grid"]]
    if theta_grid:
        opt = run.cfg["optimizer"]
        rows = sweep_theta(cfg, theta_grid, travelers, network, background, scores,
                           opt["allow_null"], opt["candidates"])
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("theta", "idealized_score", "idealized_count"))
        for theta, score, count in rows:
            w.writerow((repr(theta), repr(float(score)), count))
        run.write("theta.csv", buf.getvalue())
    run.finish(("optimizer", "scenario"))
    for r in results:
        print(f"rho={r.rho:<4} delay={r.avg_delay:.4f} min  idealized={r.idealized_count}  "
              f"score={r.idealized_score:.6g}")


def cmd_predict(run, resolution, model_name):
    trajectories = read_trajectories(run.artifact("trajectories.csv"))
    corpus = {t.user_id: t.towers for t in trajectories}
    if resolution == "merged":
        corpus = to_resolution(corpus, merged_mapping(parse_towers(run.raw("towers"))))
    params = RnnParams(**run.cfg["rnn"])
    seed = substream(run.cfg["seed"], "nextloc")
    models = ("naive",) if model_name == "naive" else ("naive", model_name)
    rows = evaluate(corpus, models, params, seed)

    seqs = [corpus[u] for u in sorted(corpus)]
    if model_name == "naive":
        predict = predict_frequent
    elif model_name == "markov":
        mk = fit_markov([s for s in seqs if len(s) >= 2])
        predict = lambda h: predict_markov(mk, h)  # noqa: E731
    else:
        rn = fit_rnn([s for s in seqs if len(s) >= 2], params, seed)
        predict = lambda h: predict_rnn(rn, h)  # noqa: E731

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("resolution", "model", "accuracy", "improvement", "n_users"))
    for r in rows:
        w.writerow((resolution, r.model, repr(r.accuracy), "" if r.improvement is None else repr(r.improvement),
                    r.n_users))
    run.write(f"accuracy_{resolution}_{model_name}.csv", buf.getvalue())
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("user_id", "last_location", "predicted_next"))
    for u in sorted(corpus):
        if corpus[u]:
            w.writerow((u, corpus[u][-1], predict(corpus[u])))
    run.write(f"predictions_{resolution}_{model_name}.csv", buf.getvalue())
    run.command = f"predict-{resolution}-{model_name}"
    run.finish(("rnn",) if model_name == "rnn" else ())
    for r in rows:
        imp = "" if r.improvement is None else f" ({r.improvement:+.1%} vs naive)"
        print(f"{resolution:6s} {r.model:6s} accuracy {r.accuracy:.3f}{imp}")


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "ingest": cmd_ingest,
    "od": cmd_od,
    "assign": cmd_assign,
    "fit-pref": cmd_fit_pref,
    "recommend": cmd_recommend,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdmrec", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"tdmrec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (defaults apply to missing fields)")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", required=True, help="artifact directory")
        p.add_argument("--data", help="directory holding raw inputs (default: --out)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "predict":
            p.add_argument("--resolution", choices=("tower", "merged"), default="tower")
            p.add_argument("--model", choices=("naive", "markov", "rnn"), default="rnn")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        run = Run(args.command, cfg, args.out, args.data)
        if args.command == "predict":
            cmd_predict(run, args.resolution, args.model)
        else:
            COMMANDS[args.command](run)
    except (ConfigError, SchemaError, RowError, TooManyRowErrors, MissingArtifactError) as exc:
        print(f"tdmrec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"tdmrec {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"tdmrec {args.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
