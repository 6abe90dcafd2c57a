"""Built-in families of initial data on the periodic grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mixflow.constitutive import MixtureModel
from mixflow.euler_core import MixtureState

# kind -> accepted parameter names
FAMILIES = {
    "uniform": {"rho", "v", "theta"},
    "gaussian": {"rho", "amp", "center", "width", "v", "theta"},
    "sine_theta": {"rho", "v", "theta", "amp", "k"},
    "contact": {"rho_left", "rho_right", "width", "v", "theta"},
    "smooth": {"rho", "amp", "phase", "v_amp", "theta", "theta_amp"},
    "rest": {"rho", "amp", "phase", "theta"},
}


@dataclass(frozen=True)
class InitialCondition:
    """Named profile family plus its parameters.

    ``smooth`` superposes phase-shifted sine waves on every field; ``rest``
    varies the composition at constant pressure and temperature with the
    fluid at rest.
    """

    kind: str = "uniform"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown initial condition kind {self.kind!r}")
        unknown = set(self.params) - FAMILIES[self.kind]
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind!r}: {sorted(unknown)}")

    def _species(self, key, n, default):
        val = np.asarray(self.params.get(key, default), dtype=float)
        val = np.broadcast_to(val, (n,)).copy() if val.ndim == 0 else val
        if val.shape != (n,):
            raise ValueError(f"{key} needs {n} entries")
        return val

    def build(self, x: np.ndarray, model: MixtureModel) -> MixtureState:
        n = model.n
        P = self.params
        ones = np.ones_like(x)
        theta0 = float(P.get("theta", 1.0))
        v0 = float(P.get("v", 0.0))
        if self.kind == "uniform":
            rho = self._species("rho", n, 1.0)[:, None] * ones
            return MixtureState(rho, v0 * ones, theta0 * ones)
        if self.kind == "gaussian":
            base = self._species("rho", n, 1.0)
            amp = self._species("amp", n, 0.5)
            center, width = float(P.get("center", np.pi)), float(P.get("width", 0.5))
            # periodic distance to the center
            dist = np.angle(np.exp(1j * (x - center)))
            bump = np.exp(-0.5 * (dist / width) ** 2)
            rho = base[:, None] + amp[:, None] * bump
            return MixtureState(rho, v0 * ones, theta0 * ones)
        if self.kind == "sine_theta":
            rho = self._species("rho", n, 1.0)[:, None] * ones
            amp, k = float(P.get("amp", 0.1)), int(P.get("k", 1))
            return MixtureState(rho, v0 * ones, theta0 * (1 + amp * np.sin(k * x)))
        if self.kind == "contact":
            left = self._species("rho_left", n, 1.0)
            right = self._species("rho_right", n, 0.5)
            width = float(P.get("width", 0.3))
            s = 0.5 * (1 + np.tanh(np.cos(x) / width))
            rho = s * left[:, None] + (1 - s) * right[:, None]
            return MixtureState(rho, v0 * ones, theta0 * ones)

        base = self._species("rho", n, 1.0)
        amp = float(P.get("amp", 0.2))
        phase = self._species("phase", n, 0.0) if "phase" in P else 2 * np.pi * np.arange(n) / n
        rho = base[:, None] * (1 + amp * np.sin(x[None, :] + phase[:, None]))
        if self.kind == "smooth":
            v = float(P.get("v_amp", 0.1)) * np.sin(x)
            theta = theta0 + float(P.get("theta_amp", 0.1)) * np.cos(x)
            return MixtureState(rho, v, theta)
        # rest: rescale the composition so the pressure matches the base state
        theta = theta0 * ones
        p0 = model.pressure(base, theta0)
        rho = rho * (p0 / model.pressure(rho, theta))
        return MixtureState(rho, 0.0 * ones, theta)
