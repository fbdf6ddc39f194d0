import json
import os
import subprocess
import sys

import numpy as np

from swarmgoal import backend

PROBE = """
import json, numpy as np
from swarmgoal import backend
from swarmgoal.assignment import CostMatrix, solve_assignment
from swarmgoal.energy import minimize_energy
from swarmgoal.worldmodel import AgentState, GoalTrajectory
rng = np.random.default_rng(3)
out = {"backend": backend(), "t": [], "pairs": []}
for _ in range(20):
    st = AgentState(1, rng.uniform(-2, 2, 2), rng.uniform(-0.3, 0.3, 2))
    g = GoalTrajectory(1, rng.normal(size=(4, 2)) * [[1], [0.3], [0.1], [0.03]])
    p = minimize_energy(st, g)
    out["t"].append([p.t_star, p.e_star])
for _ in range(20):
    c = rng.uniform(0, 5, (6, 7))
    c[rng.random((6, 7)) < 0.2] = np.inf
    try:
        out["pairs"].append(sorted(solve_assignment(CostMatrix.from_array(c)).pairs.items()))
    except Exception as e:
        out["pairs"].append(type(e).__name__)
print(json.dumps(out))
"""


def probe(pure):
    env = dict(os.environ, SWARMGOAL_PURE_PYTHON=pure)
    res = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def test_backends_agree():
    fast, slow = probe("0"), probe("1")
    assert slow["backend"] == "python"
    assert fast["backend"] == backend()
    np.testing.assert_allclose(fast["t"], slow["t"], rtol=1e-12)
    assert fast["pairs"] == slow["pairs"]
