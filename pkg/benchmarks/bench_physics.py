"""Compare the compiled and pure-Python physics kernels.

Times full-episode stepping of both mechanical environments under each
backend and checks that the trajectories agree bitwise, then times whole
environment rollouts (kernel plus numpy bookkeeping) in a subprocess per
backend.

    python3 benchmarks/bench_physics.py [--episodes N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from gpslearn import physics
from gpslearn.envs import EnvSpec, make_env


def episode(env, kernels, actions, substeps):
    """Steps one episode calling ``kernels`` directly; returns the final (q, dq)."""
    q = env.init_core[:2].copy()
    dq = env.init_core[2:].copy()
    out = []
    for u in actions:
        if env.spec.kind == "planar-arm-insertion":
            r = kernels.arm_step(q[0], q[1], dq[0], dq[1], u[0], u[1], env.params, substeps)
        else:
            r = kernels.pointmass_step(q[0], q[1], dq[0], dq[1], u[0], u[1], env.params, substeps)
        q, dq = np.array(r[:2]), np.array(r[2:])
        out.append(r)
    return np.array(out)


def bench(kind, episodes):
    env = make_env(EnvSpec(kind))
    rng = np.random.default_rng(0)
    acts = [rng.normal(scale=2.0, size=(env.T, 2)) for _ in range(episodes)]
    results = {}
    for name, mod in (("python", physics.python_backend), ("compiled", physics.compiled_backend)):
        if mod is None:
            continue
        t0 = time.perf_counter()
        trajs = [episode(env, mod, a, env.spec.substeps) for a in acts]
        results[name] = (time.perf_counter() - t0, trajs)
    line = f"{kind:22s}"
    for name, (dt, _) in results.items():
        line += f"  {name}: {1e6 * dt / (episodes * env.T):8.2f} us/step"
    if len(results) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(results["python"][1], results["compiled"][1]))
        line += f"  speedup x{results['python'][0] / results['compiled'][0]:.1f}  bitwise-equal={same}"
    print(line, flush=True)


ROLLOUT_SNIPPET = """
import time
from gpslearn import physics
from gpslearn.envs import ControllerActor, EnvSpec, make_env, rollout
from gpslearn.lingauss import TvlgController
env = make_env(EnvSpec("planar-arm-insertion"))
actor = ControllerActor(TvlgController.initial(env.T, env.dX, env.dU, 0.5))
t0 = time.perf_counter()
for s in range({n}):
    rollout(env, actor, s)
print(f"arm rollout, {{physics.BACKEND:8s}} backend: {{1e3 * (time.perf_counter() - t0) / {n}:.2f}} ms")
"""


def bench_rollouts(n):
    for pure in ("0", "1"):
        env = dict(os.environ, GPSLEARN_PURE_PYTHON=pure)
        subprocess.run([sys.executable, "-c", ROLLOUT_SNIPPET.format(n=n)], env=env, check=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=200)
    args = ap.parse_args()
    if physics.compiled_backend is None:
        print("compiled extension not built; timing the Python kernels only", flush=True)
    for kind in ("planar-arm-insertion", "point-mass-contact"):
        bench(kind, args.episodes)
    bench_rollouts(max(args.episodes // 2, 1))


if __name__ == "__main__":
    main()
