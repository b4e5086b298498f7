"""Deterministic, seedable classic-control environments.

Reward definitions:
  * mountain_car_cost — cost-to-goal: -1 per step until position >= 0.45.
  * pendulum — r = -(theta^2 + 0.1 dtheta^2 + 0.001 a^2), theta wrapped to
    [-pi, pi] before the reward; never terminates, only truncates.
  * acrobot_continuous — -1 per step until the tip clears the bar.

Dynamics use the standard classic-control formulations: the mountain-car
hill sinusoid (force scale 0.0015, velocity cap 0.07), the pendulum torque
ODE with semi-implicit Euler at dt = 0.05 (g = 10, m = l = 1, speed cap 8),
and the two-link acrobot equations integrated with RK4 at dt = 0.2
(m1 = m2 = 1, l1 = l2 = 1, lc = 0.5, I1 = I2 = 1, g = 9.8, velocity caps
4 pi and 9 pi). Out-of-range actions are clipped, never rejected. All
episodes truncate at 1000 steps.
"""

from dataclasses import dataclass

import numpy as np

from .samplers import Rng

HORIZON = 1000


@dataclass
class EnvState:
    vec: np.ndarray
    steps: int = 0


@dataclass
class StepResult:
    next_state: np.ndarray  # observation of the successor state
    reward: float
    terminated: bool
    truncated: bool


class MountainCarCost:
    """Continuous-action mountain car with -1 reward per time step."""

    name = "mountain_car_cost"
    obs_dim = 2
    action_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    obs_center = np.array([-0.3, 0.0])
    obs_halfwidth = np.array([0.9, 0.07])

    MIN_POS, MAX_POS = -1.2, 0.6
    MAX_SPEED = 0.07
    GOAL_POS = 0.45
    POWER = 0.0015

    def reset(self, rng: Rng) -> EnvState:
        pos = rng.gen.uniform(-0.6, -0.4)
        return EnvState(np.array([pos, 0.0]))

    def observe(self, state: EnvState):
        return state.vec.copy()

    def step(self, state: EnvState, action):
        force = float(np.clip(np.asarray(action).reshape(-1)[0], -1.0, 1.0))
        pos, vel = state.vec
        vel += force * self.POWER - 0.0025 * np.cos(3.0 * pos)
        vel = float(np.clip(vel, -self.MAX_SPEED, self.MAX_SPEED))
        pos += vel
        pos = float(np.clip(pos, self.MIN_POS, self.MAX_POS))
        if pos <= self.MIN_POS and vel < 0.0:
            vel = 0.0
        nxt = EnvState(np.array([pos, vel]), state.steps + 1)
        terminated = pos >= self.GOAL_POS
        truncated = (not terminated) and nxt.steps >= HORIZON
        return nxt, StepResult(self.observe(nxt), -1.0, terminated, truncated)


def _angle_normalize(x):
    return ((x + np.pi) % (2.0 * np.pi)) - np.pi


class Pendulum:
    """Torque-limited pendulum swing-up, cost on angle/speed/effort."""

    name = "pendulum"
    obs_dim = 3
    action_dim = 1
    action_low = np.array([-2.0])
    action_high = np.array([2.0])
    obs_center = np.zeros(3)
    obs_halfwidth = np.array([1.0, 1.0, 8.0])

    MAX_SPEED = 8.0
    DT = 0.05
    G = 10.0
    M = 1.0
    L = 1.0

    def reset(self, rng: Rng) -> EnvState:
        th = rng.gen.uniform(-np.pi, np.pi)
        thdot = rng.gen.uniform(-1.0, 1.0)
        return EnvState(np.array([th, thdot]))

    def observe(self, state: EnvState):
        th, thdot = state.vec
        return np.array([np.cos(th), np.sin(th), thdot])

    def step(self, state: EnvState, action):
        u = float(np.clip(np.asarray(action).reshape(-1)[0], -2.0, 2.0))
        th, thdot = state.vec
        th_n = _angle_normalize(th)
        reward = -(th_n**2 + 0.1 * thdot**2 + 0.001 * u**2)
        thdot = thdot + self.DT * (
            3.0 * self.G / (2.0 * self.L) * np.sin(th) + 3.0 / (self.M * self.L**2) * u
        )
        thdot = float(np.clip(thdot, -self.MAX_SPEED, self.MAX_SPEED))
        th = _angle_normalize(th + thdot * self.DT)
        nxt = EnvState(np.array([th, thdot]), state.steps + 1)
        truncated = nxt.steps >= HORIZON
        return nxt, StepResult(self.observe(nxt), float(reward), False, truncated)


class AcrobotContinuous:
    """Two-link acrobot; continuous torque on the middle joint."""

    name = "acrobot_continuous"
    obs_dim = 6
    action_dim = 1
    action_low = np.array([-1.0])
    action_high = np.array([1.0])
    obs_center = np.zeros(6)
    obs_halfwidth = np.array([1.0, 1.0, 1.0, 1.0, 4.0 * np.pi, 9.0 * np.pi])

    DT = 0.2
    M1 = M2 = 1.0
    L1 = 1.0
    LC1 = LC2 = 0.5
    I1 = I2 = 1.0
    G = 9.8
    MAX_VEL_1 = 4.0 * np.pi
    MAX_VEL_2 = 9.0 * np.pi

    def reset(self, rng: Rng) -> EnvState:
        return EnvState(rng.gen.uniform(-0.1, 0.1, size=4))

    def observe(self, state: EnvState):
        t1, t2, d1, d2 = state.vec
        return np.array([np.cos(t1), np.sin(t1), np.cos(t2), np.sin(t2), d1, d2])

    def _dsdt(self, s, torque):
        m1, m2, l1, lc1, lc2, i1, i2, g = (
            self.M1, self.M2, self.L1, self.LC1, self.LC2, self.I1, self.I2, self.G)
        t1, t2, d1, d2 = s
        d11 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2.0 * l1 * lc2 * np.cos(t2)) + i1 + i2
        d22 = m2 * (lc2**2 + l1 * lc2 * np.cos(t2)) + i2
        phi2 = m2 * lc2 * g * np.cos(t1 + t2 - np.pi / 2.0)
        phi1 = (
            -m2 * l1 * lc2 * d2**2 * np.sin(t2)
            - 2.0 * m2 * l1 * lc2 * d2 * d1 * np.sin(t2)
            + (m1 * lc1 + m2 * l1) * g * np.cos(t1 - np.pi / 2.0)
            + phi2
        )
        dd2 = (
            torque + d22 / d11 * phi1 - m2 * l1 * lc2 * d1**2 * np.sin(t2) - phi2
        ) / (m2 * lc2**2 + i2 - d22**2 / d11)
        dd1 = -(d22 * dd2 + phi1) / d11
        return np.array([d1, d2, dd1, dd2])

    def step(self, state: EnvState, action):
        torque = float(np.clip(np.asarray(action).reshape(-1)[0], -1.0, 1.0))
        s = state.vec
        # one RK4 step of the equations of motion
        dt = self.DT
        k1 = self._dsdt(s, torque)
        k2 = self._dsdt(s + 0.5 * dt * k1, torque)
        k3 = self._dsdt(s + 0.5 * dt * k2, torque)
        k4 = self._dsdt(s + dt * k3, torque)
        ns = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ns[0] = _angle_normalize(ns[0])
        ns[1] = _angle_normalize(ns[1])
        ns[2] = float(np.clip(ns[2], -self.MAX_VEL_1, self.MAX_VEL_1))
        ns[3] = float(np.clip(ns[3], -self.MAX_VEL_2, self.MAX_VEL_2))
        nxt = EnvState(ns, state.steps + 1)
        terminated = bool(-np.cos(ns[0]) - np.cos(ns[1] + ns[0]) > 1.0)
        truncated = (not terminated) and nxt.steps >= HORIZON
        return nxt, StepResult(self.observe(nxt), -1.0, terminated, truncated)


ENVS = {
    MountainCarCost.name: MountainCarCost,
    Pendulum.name: Pendulum,
    AcrobotContinuous.name: AcrobotContinuous,
}


def make_env(name: str):
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown env {name!r}; choose from {sorted(ENVS)}") from None
