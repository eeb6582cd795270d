import numpy as np
import pytest
import scipy.integrate
from scipy.optimize import brentq


@pytest.fixture(scope="session")
def vdp_cycle():
    """Van der Pol (mu=1) limit cycle from an adaptive integrator: long
    settle, then one period located by a Poincare section on y2 = 0."""
    def vdp(t, y):
        return [y[1], (1.0 - y[0] ** 2) * y[1] - y[0]]

    sol = scipy.integrate.solve_ivp(vdp, (0.0, 200.0), [2.0, 0.0],
                                    rtol=1e-12, atol=1e-12, dense_output=True)
    section = lambda t: sol.sol(t)[1]
    tg = np.linspace(180.0, 200.0, 20001)
    vv = sol.sol(tg)[1]
    crossings = []
    for i in range(len(tg) - 1):
        if vv[i] < 0.0 <= vv[i + 1]:
            crossings.append(brentq(section, tg[i], tg[i + 1]))
    period = crossings[-1] - crossings[-2]
    nodes = 256
    tt = crossings[-2] + np.linspace(0.0, period, nodes + 1)
    samples = sol.sol(tt).T
    return period, samples
