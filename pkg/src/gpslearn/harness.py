"""Experiment orchestration: run a configured mode and write its artifacts.

Artifacts in the output directory:

- ``learning_curve.csv``: one row per (iteration, condition), columns ``CSV_COLUMNS``.
  Policy columns are empty outside gps mode. Floats use 9 significant digits.
- ``controller.json``: the final linear-Gaussian controllers, one per condition.
- ``policy.json``: the network policy (gps mode).
- ``eval_table.csv``: success rates per condition and perturbation radius.
- ``manifest.json``: config echo, seed, config hash, artifact hashes, status.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, config_from_effective
from .envs import ControllerActor, rollout
from .errors import ConfigError, GpsError
from .gps import run_gps
from .lingauss import TvlgController
from .physics import BACKEND
from .policy import PolicyActor, PolicyNetwork
from .trajopt import train_controllers

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "iteration",
    "condition",
    "samples",
    "cumulative_samples",
    "mc_cost_mean",
    "mc_cost_std",
    "expected_cost",
    "epsilon_before",
    "epsilon_after",
    "traj_kl",
    "eta",
    "dgd_iterations",
    "mean_distance",
    "policy_loss",
    "policy_kl_mean",
    "policy_kl_max",
    "lambda_mean",
)
EVAL_COLUMNS = ("condition", "radius", "trials", "successes", "success_rate", "mean_distance")


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


class CurveWriter:
    """Streams learning-curve rows so an aborted run still leaves its prefix on disk."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)
        self.total = 0

    def __call__(self, rec):
        # Per-condition counts become one global running total.
        self.total += rec["samples"]
        row = dict(rec, cumulative_samples=self.total)
        self._w.writerow([fmt(row.get(c)) for c in CSV_COLUMNS])
        self._fh.flush()

    def close(self):
        self._fh.close()


def build_conditions(conds):
    envs, costs = [], []
    for c in conds:
        env, cost = c.build()
        envs.append(env)
        costs.append(cost)
    return envs, costs


def controllers_doc(controllers):
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "controllers",
        "controllers": [c.to_dict() for c in controllers],
    }


def load_artifact(path):
    """Returns ("controllers", [TvlgController]) or ("policy", PolicyNetwork)."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read artifact {path}: {err}") from None
    kind = doc.get("kind")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"artifact {path} has unsupported schema_version {doc.get('schema_version')!r}")
    if kind == "controllers":
        return kind, [TvlgController.from_dict(c) for c in doc["controllers"]]
    if kind == "policy":
        return kind, PolicyNetwork.from_dict(doc)
    raise ConfigError(f"artifact {path} has unknown kind {kind!r}")


def trial_seed(seed, condition, radius_index, trial):
    ss = np.random.SeedSequence([seed, condition, radius_index, trial, 7])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def evaluate(config, kind, payload):
    """Success-rate rows over the configured conditions and radii.

    Trial ``j`` at radius ``r`` uses perturbation ``+r`` for even ``j`` and ``-r`` for odd ``j``.
    Controllers are matched to training conditions by index; a policy runs on
    the test conditions when given, else on the training conditions.
    """
    ev = config.eval
    if kind == "controllers":
        conds = config.conditions
        if len(payload) != len(conds):
            raise ConfigError(f"artifact holds {len(payload)} controllers but config has {len(conds)} conditions")
        actors = [ControllerActor(c, stochastic=ev.stochastic) for c in payload]
    else:
        conds = ev.test_conditions or config.conditions
        actors = [PolicyActor(payload, stochastic=ev.stochastic)] * len(conds)
    envs, costs = build_conditions(conds)
    rows = []
    for i, (env, cost, actor) in enumerate(zip(envs, costs, actors)):
        for r_idx, radius in enumerate(ev.radii):
            dists = []
            for j in range(ev.trials):
                pert = radius if j % 2 == 0 else -radius
                s = rollout(env, actor, trial_seed(config.seed, i, r_idx, j), pert, cost)
                dists.append(s.terminal_distance)
            dists = np.array(dists)
            succ = int(np.sum(dists < ev.threshold))
            rows.append(
                {
                    "condition": i,
                    "radius": float(radius),
                    "trials": ev.trials,
                    "successes": succ,
                    "success_rate": succ / ev.trials,
                    "mean_distance": float(dists.mean()),
                }
            )
    return rows


def write_eval_table(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for r in rows:
            w.writerow([fmt(r[c]) for c in EVAL_COLUMNS])


def _manifest(config, out, artifacts, status, error=None, extra=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "mode": config.mode,
        "seed": config.seed,
        "config": config.effective(),
        "config_hash": config.content_hash(),
        "artifacts": {name: file_sha256(out / name) for name in artifacts if (out / name).exists()},
        "status": status,
        "backend": BACKEND,
        "version": __version__,
    }
    if error is not None:
        doc["error"] = error
    if extra:
        doc.update(extra)
    write_json(out / "manifest.json", doc)
    return doc


def run_experiment(config, out=None):
    """Run ``config`` and write artifacts to ``out`` (default ``config.output_dir``).

    Returns ``(exit_status, manifest)``. Training failures leave the partial
    learning curve on disk and a manifest with status ``failed``.
    """
    if config.mode == "replay":
        return replay(config.manifest, out)
    out = Path(config.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)

    if config.mode == "eval":
        if config.eval is None:
            raise ConfigError("eval mode needs an 'eval' section")
        if not config.artifact:
            raise ConfigError("eval mode needs an artifact path")
        kind, payload = load_artifact(config.artifact)
        write_eval_table(out / "eval_table.csv", evaluate(config, kind, payload))
        return 0, _manifest(config, out, ["eval_table.csv"], "ok")

    envs, costs = build_conditions(config.conditions)
    writer = CurveWriter(out / "learning_curve.csv")
    artifacts = ["learning_curve.csv"]
    try:
        if config.mode == "traj":
            states, _ = train_controllers(envs, costs, config.trajopt, config.seed, on_record=writer)
            kind, payload = "controllers", [s.controller for s in states]
        else:
            net, _, gstate = run_gps(envs, costs, config.gps, config.seed, on_record=writer)
            write_json(out / "policy.json", net.to_dict())
            artifacts.append("policy.json")
            states = gstate.conditions
            kind, payload = "policy", net
    except GpsError as err:
        writer.close()
        log.error("training aborted: %s", err)
        return 1, _manifest(config, out, artifacts, "failed", error=str(err))
    writer.close()
    write_json(out / "controller.json", controllers_doc([s.controller for s in states]))
    artifacts.append("controller.json")
    if config.eval is not None:
        write_eval_table(out / "eval_table.csv", evaluate(config, kind, payload))
        artifacts.append("eval_table.csv")
    return 0, _manifest(config, out, artifacts, "ok")


def replay(manifest_path, out=None):
    """Re-run a recorded experiment and compare artifact hashes with the manifest."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read manifest {manifest_path}: {err}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"manifest has unsupported schema_version {doc.get('schema_version')!r}")
    out = Path(manifest_path.parent / "replay" if out is None else out)
    config = config_from_effective(doc["config"], out)
    if config.content_hash() != doc["config_hash"]:
        raise ConfigError("manifest config does not match its recorded hash")
    status, new = run_experiment(config, out)
    mismatched = sorted(
        name for name, digest in doc["artifacts"].items() if new["artifacts"].get(name) != digest
    )
    new["replay_of"] = str(manifest_path)
    new["mismatched"] = mismatched
    write_json(out / "manifest.json", new)
    if mismatched:
        log.error("replay differs in %s", ", ".join(mismatched))
        return 1, new
    return status, new
