import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mcaprice import _accel, compare_schemes, sample_scenario, ScenarioConfig

SCRIPT = """
import json
from mcaprice import _accel, compare_schemes, sample_scenario, ScenarioConfig
s = sample_scenario(ScenarioConfig(n_users=4), 3)
print(json.dumps({"backend": _accel.backend(),
                  "profit": [r.profit for r in compare_schemes(s)]}))
"""


def _run(flag):
    env = dict(os.environ, MCAPRICE_DISABLE_NUMBA=flag)
    r = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(r.stdout)


def test_pure_python_fallback_matches():
    slow = _run("1")
    assert slow["backend"] == "numpy"
    ref = [r.profit for r in compare_schemes(sample_scenario(ScenarioConfig(n_users=4), 3))]
    assert np.allclose(slow["profit"], ref, rtol=1e-8)


@pytest.mark.skipif(not _accel.NUMBA_ENABLED, reason="numba disabled")
def test_flag_values():
    assert _run("0")["backend"] == "numba"
    assert _accel.backend() == "numba"
