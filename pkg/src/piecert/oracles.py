"""Analytic semigroups for the classical examples, used to validate certificates.

Three families are supported: the shift semigroup of the transport equation,
the sine-eigenfunction expansion of the (reaction-)diffusion equation, and
the rotating modal pairs of the wave equation in (u_t, u_s) coordinates.
Each evolves sampled states on a fixed quadrature grid and exposes an
empirical growth-rate estimate.
"""

from __future__ import annotations

import numpy as np

from .quadrature import panel_nodes

DEFAULT_MODES = 64


class OracleMismatchError(ValueError):
    """State shape or oracle kind does not match the request."""


class SemigroupOracle:
    """Base: a fixed grid on [0, 1] plus modal data where applicable."""

    kind = None
    state_dim = 1

    def __init__(self, grid_size=256, modes=DEFAULT_MODES):
        self.nodes, self.weights = panel_nodes(0.0, 1.0, panels=grid_size // 16,
                                               npts=16)
        self.modes = modes

    def sample(self, fns):
        """Sample callables (one per state component) on the oracle grid."""
        if self.state_dim == 1:
            f = fns if callable(fns) else fns[0]
            return np.array([float(f(s)) for s in self.nodes])
        return np.stack([np.array([float(f(s)) for s in self.nodes])
                         for f in fns])

    def _check_state(self, x):
        x = np.asarray(x, dtype=float)
        expected = (len(self.nodes),) if self.state_dim == 1 \
            else (self.state_dim, len(self.nodes))
        if x.shape != expected:
            raise OracleMismatchError(
                f"state shape {x.shape}, expected {expected}")
        return x

    def norm(self, x):
        x = self._check_state(x)
        if self.state_dim == 1:
            return float(np.sqrt(np.sum(self.weights * x ** 2)))
        return float(np.sqrt(np.sum(self.weights * np.sum(x ** 2, axis=0))))

    def evolve(self, x, t):
        raise NotImplementedError

    def empirical_rate(self, x, horizon=2.0, samples=16):
        """Least-squares slope of log ||e^{tA} x|| over sampled times."""
        if horizon <= 0 or samples < 8:
            raise ValueError("need horizon > 0 and samples >= 8")
        times = np.linspace(0.0, horizon, samples)
        ts, logs = [], []
        for t in times:
            nrm = self.norm(self.evolve(x, t))
            if nrm > 1e-300:
                ts.append(t)
                logs.append(np.log(nrm))
        if len(ts) < 2:
            return -np.inf
        slope = np.polyfit(ts, logs, 1)[0]
        return float(slope)

    def validate_certificate(self, omega, gain, trial_states, horizon=2.0,
                             samples=32, slack=1e-6):
        """Check ||e^{tA} x|| <= M e^{omega t} ||x|| on sampled times.

        Returns a report dict; ``passed`` is True only if the bound holds
        with multiplicative slack (1 + slack) for every trial and time.
        """
        if gain < 1.0:
            raise ValueError("gain must be >= 1")
        times = np.linspace(0.0, horizon, samples)
        worst = 0.0
        failures = []
        for idx, x in enumerate(trial_states):
            x0 = self.norm(x)
            if x0 == 0.0:
                continue
            for t in times:
                bound = gain * np.exp(omega * t) * x0
                actual = self.norm(self.evolve(x, t))
                ratio = actual / bound
                worst = max(worst, ratio)
                if actual > bound * (1.0 + slack):
                    failures.append({"trial": idx, "t": float(t),
                                     "norm": actual, "bound": bound})
        return {"passed": not failures, "worst_ratio": worst,
                "failures": failures, "omega": omega, "gain": gain}


class TransportShiftOracle(SemigroupOracle):
    """(e^{tA} x)(s) = x(s - t) for t <= s, zero otherwise.

    Uses a uniform midpoint grid with equal weights: when t is a grid
    multiple the shift is an exact index shift, and for general t the
    linear interpolation cannot increase the measured norm (convexity of
    the square with equal weights), so the contraction property is never
    violated by discretization.
    """

    kind = "transport-shift"
    state_dim = 1

    def __init__(self, grid_size=512, modes=DEFAULT_MODES):
        self.grid_step = 1.0 / grid_size
        self.nodes = (np.arange(grid_size) + 0.5) * self.grid_step
        self.weights = np.full(grid_size, self.grid_step)
        self.modes = modes

    def evolve(self, x, t):
        if t < 0:
            raise ValueError("t must be >= 0")
        x = self._check_state(x)
        if t == 0.0:
            return x.copy()
        shifted = self.nodes - t
        out = np.interp(shifted, self.nodes, x, left=0.0, right=0.0)
        out[shifted < self.nodes[0] - 0.5 * self.grid_step] = 0.0
        return out


class HeatEigenOracle(SemigroupOracle):
    """Sine-series solution of u_t = u_ss + r u with Dirichlet conditions."""

    kind = "heat-eigen"
    state_dim = 1

    def __init__(self, reaction=0.0, grid_size=256, modes=DEFAULT_MODES):
        super().__init__(grid_size, modes)
        self.reaction = float(reaction)
        ns = np.arange(1, self.modes + 1)
        self.rates = self.reaction - (ns * np.pi) ** 2
        self.phis = np.sin(np.outer(ns, np.pi * self.nodes))  # (modes, N)

    def coefficients(self, x):
        x = self._check_state(x)
        return 2.0 * self.phis @ (self.weights * x)

    def evolve(self, x, t):
        if t < 0:
            raise ValueError("t must be >= 0")
        c = self.coefficients(x)
        return (c * np.exp(self.rates * t)) @ self.phis


class WaveEigenOracle(SemigroupOracle):
    """Modal rotation of the wave equation state (u_t, u_s).

    With mu_n = (n + 1/2) pi, phi_n = sin(mu_n s) and psi_n = cos(mu_n s),
    each modal pair (b_n phi_n, a_n psi_n) rotates at angular rate mu_n, so
    the L2 norm of the state is conserved.
    """

    kind = "wave-eigen"
    state_dim = 2

    def __init__(self, grid_size=256, modes=DEFAULT_MODES):
        super().__init__(grid_size, modes)
        ns = np.arange(0, self.modes)
        self.mus = (ns + 0.5) * np.pi
        self.phis = np.sin(np.outer(self.mus, self.nodes))
        self.psis = np.cos(np.outer(self.mus, self.nodes))

    def coefficients(self, x):
        x = self._check_state(x)
        b = 2.0 * self.phis @ (self.weights * x[0])
        a = 2.0 * self.psis @ (self.weights * x[1])
        return a, b

    def evolve(self, x, t):
        if t < 0:
            raise ValueError("t must be >= 0")
        a, b = self.coefficients(x)
        cos_t = np.cos(self.mus * t)
        sin_t = np.sin(self.mus * t)
        w1 = (b * cos_t - a * sin_t) @ self.phis
        w2 = (a * cos_t + b * sin_t) @ self.psis
        return np.stack([w1, w2])


ORACLE_KINDS = {
    "transport-shift": TransportShiftOracle,
    "heat-eigen": HeatEigenOracle,
    "wave-eigen": WaveEigenOracle,
}


def make_oracle(kind, **kwargs):
    if kind not in ORACLE_KINDS:
        raise OracleMismatchError(
            f"unknown oracle kind {kind!r}; choose from {sorted(ORACLE_KINDS)}")
    return ORACLE_KINDS[kind](**kwargs)
