"""Actor-critic agents.

Online: SAC, GreedyAC, and the on-policy-weighted TAWAC. Offline: the
advantage-weighted family (TAWAC, AWAC, IQL, InAC) sharing IQL-style
expectile value machinery, plus TD3BC.

Design notes pinned here rather than in config docs:
  * Actor gradients use the score-function estimator with the analytic
    log-likelihood gradients for every family, so the policy comparison
    never mixes estimator types. SAC subtracts a per-state baseline (the
    mean weight over its own action samples), which also makes the
    Boltzmann fixed point an exact zero of the estimator.
  * Twin critics for SAC and TD3BC, single critic elsewhere.
  * The advantage weight is exp_{q'}((Q - V)/tau) clipped at weight_clip;
    q' = 1 reproduces AWAC's exponential weight exactly, q' = 0 zeroes
    every transition with advantage <= -tau.
  * V(s): online TAWAC regresses a V net toward the mean critic value of
    fresh policy samples; the offline family uses expectile regression on
    dataset actions. Both constructions are selectable via v_mode.
  * Out-of-support dataset/off-policy actions are replaced by the nearest
    of replacement_batch on-policy samples before the likelihood term, and
    gradients flow through the replaced sample's log-probability.
"""

import math
from dataclasses import dataclass

import numpy as np

from .deformed import exp_q
from .heads import (
    PolicyHeadConfig,
    PolicyHeadOutput,
    grad_log_prob_raw,
    grad_log_prob_raw_with_replacement,
    head_forward,
    log_prob,
    mean_action,
    sample_action,
)
from .nn import (
    MlpParams,
    adam_init,
    adam_step,
    mlp_forward,
    mlp_backward,
    mlp_init,
    polyak_update,
)
from .samplers import Rng


class InsufficientDataError(RuntimeError):
    pass


class MissingBehaviorLogProbError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvInfo:
    name: str
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    obs_center: np.ndarray
    obs_halfwidth: np.ndarray

    @classmethod
    def from_env(cls, env):
        return cls(
            name=env.name,
            obs_dim=env.obs_dim,
            action_dim=env.action_dim,
            action_low=np.asarray(env.action_low, dtype=float),
            action_high=np.asarray(env.action_high, dtype=float),
            obs_center=np.asarray(env.obs_center, dtype=float),
            obs_halfwidth=np.asarray(env.obs_halfwidth, dtype=float),
        )


@dataclass
class AgentConfig:
    algo: str = "sac"
    gamma: float = 0.99
    temperature: float = 0.1
    q_prime: float = 0.0
    rho: float = 0.1
    n_proposal: int = 30
    expectile: float = 0.7
    bc_alpha: float = 2.5
    critic_lr: float = 1e-3
    actor_lr_mult: float = 1.0
    batch_size: int = 32
    polyak: float = 0.01
    hidden: tuple = (64, 64)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    buffer_capacity: int = 1_000_000
    v_samples: int = 4
    weight_samples: int = 4
    sac_actor_samples: int = 4
    weight_clip: float = 100.0
    td3_policy_noise: float = 0.2
    td3_noise_clip: float = 0.5
    td3_policy_delay: int = 2
    v_mode: str = "auto"  # auto | mc | expectile
    normalize_obs: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("rho must lie in (0, 1]")
        if not 0.0 < self.expectile < 1.0:
            raise ValueError("expectile must lie in (0, 1)")
        if self.batch_size < 1 or self.n_proposal < 1:
            raise ValueError("batch and proposal sizes must be positive")
        if self.critic_lr <= 0.0 or self.actor_lr_mult <= 0.0:
            raise ValueError("learning rates must be positive")
        if not 0.0 < self.polyak <= 1.0:
            raise ValueError("polyak must lie in (0, 1]")

    @property
    def actor_lr(self):
        return self.critic_lr * self.actor_lr_mult


def advantage_weight(q_prime, advantage, temperature, clip=100.0):
    """exp_{q'}((Q - V)/tau), clipped above; the TAWAC/AWAC weighting."""
    w = exp_q(np.asarray(advantage, dtype=float) / temperature, q_prime)
    return np.minimum(w, clip)


def inac_weight(advantage, temperature, behavior_log_prob, clip=100.0):
    """exp((Q - V)/tau - ln pi_D(a|s)), clipped above."""
    behavior_log_prob = np.asarray(behavior_log_prob, dtype=float)
    if np.any(~np.isfinite(behavior_log_prob)):
        raise MissingBehaviorLogProbError(
            "InAC needs a finite behavior log-prob for every transition")
    z = np.asarray(advantage, dtype=float) / temperature - behavior_log_prob
    return np.minimum(np.exp(np.minimum(z, np.log(clip))), clip)


# ---------------------------------------------------------------------------
# network bundles


class Net:
    """MlpParams plus its Adam state."""

    def __init__(self, sizes, lr, rng, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = mlp_init(sizes, rng)
        self.adam = adam_init(self.params, lr, beta1, beta2, eps)

    def forward(self, x):
        return mlp_forward(self.params, x)

    def step(self, grads):
        adam_step(self.params, grads, self.adam)


def _sa(s, a):
    return np.concatenate([s, a], axis=1)


def q_values(params: MlpParams, s, a):
    out, tape = mlp_forward(params, _sa(s, a))
    return out[:, 0], tape


def critic_mse_step(net: Net, s, a, targets):
    """One squared-error TD step; returns the scalar loss."""
    q, tape = q_values(net.params, s, a)
    err = q - targets
    gout = (2.0 / err.size) * err[:, None]
    grads, _ = mlp_backward(net.params, tape, gout)
    net.step(grads)
    return float(np.mean(err**2))


def expectile_v_step(net: Net, s, q_targets, expectile):
    """Asymmetric least-squares step of V toward q_targets."""
    v, tape = mlp_forward(net.params, s)
    u = q_targets - v[:, 0]
    w = np.abs(expectile - (u < 0.0))
    gout = (-2.0 / u.size) * (w * u)[:, None]
    grads, _ = mlp_backward(net.params, tape, gout)
    net.step(grads)
    return float(np.mean(w * u**2))


def repeat_head_output(out: PolicyHeadOutput, k: int) -> PolicyHeadOutput:
    """Repeat each batch row k times (for multi-sample estimators)."""
    rep = {}
    for name in ("raw", "mu", "sigma", "tanh_mu", "std_mask", "nu", "alpha", "beta"):
        arr = getattr(out, name)
        rep[name] = None if arr is None else np.repeat(arr, k, axis=0)
    return PolicyHeadOutput(config=out.config, **rep)


class Actor:
    """Policy network with its head config."""

    def __init__(self, obs_dim, head_cfg: PolicyHeadConfig, hidden, lr, rng,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.head_cfg = head_cfg
        self.net = Net([obs_dim, *hidden, head_cfg.param_count], lr, rng, beta1, beta2, eps)

    def head(self, s):
        raw, tape = self.net.forward(s)
        return head_forward(self.head_cfg, raw), tape

    def head_from(self, params: MlpParams, s):
        raw, tape = mlp_forward(params, s)
        return head_forward(self.head_cfg, raw), tape


def weighted_loglik_grads(actor: Actor, tape, out: PolicyHeadOutput, actions, weights,
                          rng: Rng, k_per_state=1, use_replacement=True):
    """Loss and network gradients of E[-w log pi(a|s)] through head and MLP.

    `out` may hold k_per_state repeats per tape row; gradients are summed
    back onto the un-repeated rows. Returns (loss, grads, mean log-prob).
    """
    if use_replacement:
        logp, graw, _ = grad_log_prob_raw_with_replacement(actor.head_cfg, out, actions, rng)
    else:
        logp, graw = grad_log_prob_raw(actor.head_cfg, out, actions)
    n = graw.shape[0]
    gout = -(weights[:, None] * graw) / n
    if k_per_state > 1:
        gout = gout.reshape(-1, k_per_state, gout.shape[1]).sum(axis=1)
    grads, _ = mlp_backward(actor.net.params, tape, gout)
    loss = float(np.mean(-weights * logp))
    return loss, grads, float(np.mean(logp))


def weighted_loglik_step(actor: Actor, tape, out: PolicyHeadOutput, actions, weights,
                         rng: Rng, k_per_state=1, use_replacement=True):
    """Gradient step on E[-w log pi(a|s)]; returns (loss, mean log-prob)."""
    loss, grads, mean_logp = weighted_loglik_grads(
        actor, tape, out, actions, weights, rng, k_per_state, use_replacement)
    actor.net.step(grads)
    return loss, mean_logp


def sac_actor_grads(actor: Actor, s, q_fn, temperature, k, rng: Rng):
    """Score-function gradient of E_{a~pi}[tau ln pi(a|s) - Q(s, a)].

    Per-state baseline (mean weight over the k samples) is subtracted, so a
    policy already proportional to exp(Q/tau) yields exactly zero gradients.
    Returns (loss estimate, grads).
    """
    out, tape = actor.head(s)
    rep = repeat_head_output(out, k)
    a = sample_action(actor.head_cfg, rep, rng)
    logp, graw = grad_log_prob_raw(actor.head_cfg, rep, a)
    q = q_fn(np.repeat(s, k, axis=0), a)
    w = temperature * logp - q
    w_c = (w.reshape(-1, k) - w.reshape(-1, k).mean(axis=1, keepdims=True)).reshape(-1)
    gout = (w_c[:, None] * graw) / w.size
    gout = gout.reshape(-1, k, gout.shape[1]).sum(axis=1)
    grads, _ = mlp_backward(actor.net.params, tape, gout)
    return float(np.mean(w)), grads


# ---------------------------------------------------------------------------
# base class


class AgentBase:
    needs_behavior_log_prob = False

    def __init__(self, env_info: EnvInfo, head_cfg: PolicyHeadConfig, cfg: AgentConfig, seed: int):
        self.env_info = env_info
        self.head_cfg = head_cfg
        self.cfg = cfg
        self.seed = seed
        self.updates = 0

    def _rng(self, purpose):
        return Rng.from_triple(0, self.seed, purpose)

    def normalize(self, s):
        if not self.cfg.normalize_obs:
            return np.asarray(s, dtype=float)
        return (np.asarray(s, dtype=float) - self.env_info.obs_center) / self.env_info.obs_halfwidth

    def clip_actions(self, a):
        """Critics only ever see executable actions: policy samples are
        clipped to the env bounds before entering a Q network (log-probs
        stay at the pre-clip sample, matching the execution convention)."""
        return np.clip(a, self.env_info.action_low, self.env_info.action_high)

    def _actor_head_single(self, obs):
        s = self.normalize(obs)[None, :]
        out, _ = self.actor.head(s)
        return out

    def act(self, obs, rng: Rng):
        out = self._actor_head_single(obs)
        return sample_action(self.head_cfg, out, rng)[0]

    def act_with_log_prob(self, obs, rng: Rng):
        out = self._actor_head_single(obs)
        a = sample_action(self.head_cfg, out, rng)
        return a[0], float(log_prob(self.head_cfg, out, a)[0])

    def eval_act(self, obs, rng: Rng):
        return self.act(obs, rng)

    def _batch(self, data, rng, require_full=True):
        """Online updates require a full batch of distinct experience; the
        offline losses only need nonempty data (sampling is with
        replacement either way)."""
        if require_full and len(data) < self.cfg.batch_size:
            raise InsufficientDataError(
                f"need {self.cfg.batch_size} transitions, have {len(data)}")
        if len(data) == 0:
            raise InsufficientDataError("no transitions available")
        return data.sample(self.cfg.batch_size, rng)

    def actor_params_for_checkpoint(self):
        return {"actor": self.actor.net.params}


# ---------------------------------------------------------------------------
# SAC


class SacAgent(AgentBase):
    def __init__(self, env_info, head_cfg, cfg, seed):
        super().__init__(env_info, head_cfg, cfg, seed)
        d, na = env_info.obs_dim, env_info.action_dim
        h = list(cfg.hidden)
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.q1 = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q1"), b1, b2, eps)
        self.q2 = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q2"), b1, b2, eps)
        self.q1_target = self.q1.params.copy()
        self.q2_target = self.q2.params.copy()
        self.actor = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-actor"), b1, b2, eps)

    def _min_q(self, s, a):
        q1, _ = q_values(self.q1.params, s, a)
        q2, _ = q_values(self.q2.params, s, a)
        return np.minimum(q1, q2)

    def update(self, data, rng: Rng):
        cfg = self.cfg
        batch = self._batch(data, rng)
        s = self.normalize(batch.states)
        s2 = self.normalize(batch.next_states)
        a = batch.actions

        out2, _ = self.actor.head(s2)
        a2 = sample_action(self.head_cfg, out2, rng)
        logp2 = log_prob(self.head_cfg, out2, a2)
        a2c = self.clip_actions(a2)
        q1t, _ = q_values(self.q1_target, s2, a2c)
        q2t, _ = q_values(self.q2_target, s2, a2c)
        not_done = 1.0 - batch.terminated
        y = batch.rewards + cfg.gamma * not_done * (np.minimum(q1t, q2t) - cfg.temperature * logp2)
        c1 = critic_mse_step(self.q1, s, a, y)
        c2 = critic_mse_step(self.q2, s, a, y)

        actor_loss, grads = sac_actor_grads(
            self.actor, s, lambda ss, aa: self._min_q(ss, self.clip_actions(aa)),
            cfg.temperature, cfg.sac_actor_samples, rng)
        self.actor.net.step(grads)

        polyak_update(self.q1_target, self.q1.params, cfg.polyak)
        polyak_update(self.q2_target, self.q2.params, cfg.polyak)
        self.updates += 1
        return {"critic_loss": 0.5 * (c1 + c2), "actor_loss": actor_loss}


# ---------------------------------------------------------------------------
# GreedyAC


def top_k_indices(values, k):
    """Row-wise indices of the k largest entries (order inside the set is
    irrelevant to the losses that consume it)."""
    if k >= values.shape[1]:
        return np.tile(np.arange(values.shape[1]), (values.shape[0], 1))
    return np.argpartition(-values, k - 1, axis=1)[:, :k]


class GreedyAcAgent(AgentBase):
    def __init__(self, env_info, head_cfg, cfg, seed):
        super().__init__(env_info, head_cfg, cfg, seed)
        d, na = env_info.obs_dim, env_info.action_dim
        h = list(cfg.hidden)
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.q = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q"), b1, b2, eps)
        self.q_target = self.q.params.copy()
        self.actor = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-actor"), b1, b2, eps)
        self.proposal = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-proposal"), b1, b2, eps)

    def update(self, data, rng: Rng):
        cfg = self.cfg
        batch = self._batch(data, rng)
        s = self.normalize(batch.states)
        s2 = self.normalize(batch.next_states)

        out2, _ = self.actor.head(s2)
        a2 = self.clip_actions(sample_action(self.head_cfg, out2, rng))
        qt, _ = q_values(self.q_target, s2, a2)
        y = batch.rewards + cfg.gamma * (1.0 - batch.terminated) * qt
        c = critic_mse_step(self.q, s, batch.actions, y)

        # proposal draws, clipped to executable actions, ranked by the critic
        p = cfg.n_proposal
        k = max(1, math.ceil(cfg.rho * p))
        out_prop, tape_prop = self.proposal.head(s)
        rep_prop = repeat_head_output(out_prop, p)
        a_p = sample_action(self.head_cfg, rep_prop, rng)
        a_pc = self.clip_actions(a_p)
        s_rep = np.repeat(s, p, axis=0)
        q_p, _ = q_values(self.q.params, s_rep, a_pc)
        q_p = q_p.reshape(-1, p)
        top = top_k_indices(q_p, k)
        a_p3 = a_pc.reshape(-1, p, self.env_info.action_dim)
        rows = np.arange(a_p3.shape[0])[:, None]
        a_top = a_p3[rows, top].reshape(-1, self.env_info.action_dim)

        # actor: likelihood of the elite set
        out, tape = self.actor.head(s)
        rep = repeat_head_output(out, k)
        actor_loss, _ = weighted_loglik_step(
            self.actor, tape, rep, a_top, np.ones(a_top.shape[0]), rng, k_per_state=k)

        # proposal: elite likelihood plus an entropy bonus. The bonus is the
        # score-function gradient of H estimated from the proposal's own raw
        # draws, tau * mean[grad log pi * (log pi - baseline)]; gradients of
        # the sample-as-data estimate alone average to zero and cannot stop
        # a variance collapse.
        rep_k = repeat_head_output(out_prop, k)
        _, graw_top, _ = grad_log_prob_raw_with_replacement(self.head_cfg, rep_k, a_top, rng)
        logp_all, graw_all = grad_log_prob_raw(self.head_cfg, rep_prop, a_p)
        base = logp_all.reshape(-1, p).mean(axis=1, keepdims=True)
        ent_w = (logp_all.reshape(-1, p) - base).reshape(-1)
        g1 = (-graw_top / graw_top.shape[0]).reshape(-1, k, graw_top.shape[1]).sum(axis=1)
        g2 = (cfg.temperature * ent_w[:, None] * graw_all / graw_all.shape[0]).reshape(
            -1, p, graw_all.shape[1]).sum(axis=1)
        grads, _ = mlp_backward(self.proposal.net.params, tape_prop, g1 + g2)
        self.proposal.net.step(grads)

        polyak_update(self.q_target, self.q.params, cfg.polyak)
        self.updates += 1
        return {"critic_loss": c, "actor_loss": actor_loss,
                "proposal_entropy": float(-np.mean(logp_all))}


# ---------------------------------------------------------------------------
# online TAWAC


class TawacOnlineAgent(AgentBase):
    """Tsallis advantage-weighted likelihood with actions drawn from the
    Polyak-averaged target actor; V regressed to mean critic value of fresh
    policy samples (v_mode=mc) or by expectile regression on buffer actions."""

    def __init__(self, env_info, head_cfg, cfg, seed):
        super().__init__(env_info, head_cfg, cfg, seed)
        d, na = env_info.obs_dim, env_info.action_dim
        h = list(cfg.hidden)
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.q = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q"), b1, b2, eps)
        self.q_target = self.q.params.copy()
        self.v = Net([d, *h, 1], cfg.critic_lr, self._rng("init-v"), b1, b2, eps)
        self.actor = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-actor"), b1, b2, eps)
        self.actor_target = self.actor.net.params.copy()

    def update(self, data, rng: Rng):
        cfg = self.cfg
        batch = self._batch(data, rng)
        s = self.normalize(batch.states)
        s2 = self.normalize(batch.next_states)

        out2, _ = self.actor.head_from(self.actor_target, s2)
        a2 = self.clip_actions(sample_action(self.head_cfg, out2, rng))
        qt, _ = q_values(self.q_target, s2, a2)
        y = batch.rewards + cfg.gamma * (1.0 - batch.terminated) * qt
        c = critic_mse_step(self.q, s, batch.actions, y)

        out, tape = self.actor.head(s)
        v_mode = "mc" if cfg.v_mode == "auto" else cfg.v_mode
        if v_mode == "mc":
            kv = cfg.v_samples
            rep_v = repeat_head_output(out, kv)
            a_v = self.clip_actions(sample_action(self.head_cfg, rep_v, rng))
            qv, _ = q_values(self.q.params, np.repeat(s, kv, axis=0), a_v)
            v_targets = qv.reshape(-1, kv).mean(axis=1)
            vloss = critic_value_step(self.v, s, v_targets)
        else:
            q_data, _ = q_values(self.q_target, s, batch.actions)
            vloss = expectile_v_step(self.v, s, q_data, cfg.expectile)

        # actor: executable actions from the target policy, weighted
        # likelihood under the current policy
        kw = cfg.weight_samples
        out_t, _ = self.actor.head_from(self.actor_target, s)
        rep_t = repeat_head_output(out_t, kw)
        a_w = self.clip_actions(sample_action(self.head_cfg, rep_t, rng))
        s_rep = np.repeat(s, kw, axis=0)
        qw, _ = q_values(self.q.params, s_rep, a_w)
        v_s, _ = mlp_forward(self.v.params, s)
        adv = qw - np.repeat(v_s[:, 0], kw)
        w = advantage_weight(cfg.q_prime, adv, cfg.temperature, cfg.weight_clip)
        rep_cur = repeat_head_output(out, kw)
        actor_loss, _ = weighted_loglik_step(
            self.actor, tape, rep_cur, a_w, w, rng, k_per_state=kw)

        polyak_update(self.q_target, self.q.params, cfg.polyak)
        polyak_update(self.actor_target, self.actor.net.params, cfg.polyak)
        self.updates += 1
        return {"critic_loss": c, "v_loss": vloss, "actor_loss": actor_loss,
                "mean_weight": float(np.mean(w))}


def critic_value_step(net: Net, s, targets):
    """Plain squared-error regression of a state-value net."""
    v, tape = mlp_forward(net.params, s)
    err = v[:, 0] - targets
    gout = (2.0 / err.size) * err[:, None]
    grads, _ = mlp_backward(net.params, tape, gout)
    net.step(grads)
    return float(np.mean(err**2))


# ---------------------------------------------------------------------------
# offline advantage-weighted family (TAWAC / AWAC / IQL / InAC)


class AdvantageWeightedOfflineAgent(AgentBase):
    """Shared offline machinery: expectile V, Q bootstrapped from V(s'),
    actor extracted by the per-algorithm advantage weight."""

    def __init__(self, env_info, head_cfg, cfg, seed):
        super().__init__(env_info, head_cfg, cfg, seed)
        if cfg.algo not in ("tawac", "awac", "iql", "inac"):
            raise ValueError(f"not an advantage-weighted algorithm: {cfg.algo}")
        self.needs_behavior_log_prob = cfg.algo == "inac"
        d, na = env_info.obs_dim, env_info.action_dim
        h = list(cfg.hidden)
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.q = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q"), b1, b2, eps)
        self.q_target = self.q.params.copy()
        self.v = Net([d, *h, 1], cfg.critic_lr, self._rng("init-v"), b1, b2, eps)
        self.actor = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-actor"), b1, b2, eps)

    def _weights(self, adv, behavior_logp):
        cfg = self.cfg
        if cfg.algo == "tawac":
            return advantage_weight(cfg.q_prime, adv, cfg.temperature, cfg.weight_clip)
        if cfg.algo in ("awac", "iql"):
            return advantage_weight(1.0, adv, cfg.temperature, cfg.weight_clip)
        return inac_weight(adv, cfg.temperature, behavior_logp, cfg.weight_clip)

    def update(self, data, rng: Rng):
        cfg = self.cfg
        batch = self._batch(data, rng, require_full=False)
        s = self.normalize(batch.states)
        s2 = self.normalize(batch.next_states)
        a = batch.actions

        q_data, _ = q_values(self.q_target, s, a)
        v_s, _ = mlp_forward(self.v.params, s)
        adv = q_data - v_s[:, 0]

        v_mode = "expectile" if cfg.v_mode == "auto" else cfg.v_mode
        if v_mode == "expectile":
            vloss = expectile_v_step(self.v, s, q_data, cfg.expectile)
        else:
            kv = cfg.v_samples
            out_v, _ = self.actor.head(s)
            rep_v = repeat_head_output(out_v, kv)
            a_v = self.clip_actions(sample_action(self.head_cfg, rep_v, rng))
            qv, _ = q_values(self.q.params, np.repeat(s, kv, axis=0), a_v)
            vloss = critic_value_step(self.v, s, qv.reshape(-1, kv).mean(axis=1))

        v_s2, _ = mlp_forward(self.v.params, s2)
        y = batch.rewards + cfg.gamma * (1.0 - batch.terminated) * v_s2[:, 0]
        c = critic_mse_step(self.q, s, a, y)

        w = self._weights(adv, batch.behavior_log_probs)
        out, tape = self.actor.head(s)
        actor_loss, _ = weighted_loglik_step(self.actor, tape, out, a, w, rng)

        polyak_update(self.q_target, self.q.params, cfg.polyak)
        self.updates += 1
        return {"critic_loss": c, "v_loss": vloss, "actor_loss": actor_loss,
                "mean_weight": float(np.mean(w)),
                "zero_weight_fraction": float(np.mean(w == 0.0))}


# ---------------------------------------------------------------------------
# TD3BC


class Td3BcAgent(AgentBase):
    """Twin critics with smoothed target policy; deterministic-mean actor
    ascending lambda Q minus the behavior-cloning penalty."""

    def __init__(self, env_info, head_cfg, cfg, seed):
        super().__init__(env_info, head_cfg, cfg, seed)
        d, na = env_info.obs_dim, env_info.action_dim
        h = list(cfg.hidden)
        b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
        self.q1 = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q1"), b1, b2, eps)
        self.q2 = Net([d + na, *h, 1], cfg.critic_lr, self._rng("init-q2"), b1, b2, eps)
        self.q1_target = self.q1.params.copy()
        self.q2_target = self.q2.params.copy()
        self.actor = Actor(d, head_cfg, h, cfg.actor_lr, self._rng("init-actor"), b1, b2, eps)
        self.actor_target = self.actor.net.params.copy()

    def act(self, obs, rng: Rng):
        out = self._actor_head_single(obs)
        return mean_action(self.head_cfg, out)[0]

    def critic_targets(self, batch, rng: Rng):
        """Clipped double-Q target with smoothing noise on the target policy."""
        cfg = self.cfg
        s2 = self.normalize(batch.next_states)
        out2, _ = self.actor.head_from(self.actor_target, s2)
        pi2 = mean_action(self.head_cfg, out2)
        noise = np.clip(
            cfg.td3_policy_noise * rng.gen.standard_normal(pi2.shape),
            -cfg.td3_noise_clip, cfg.td3_noise_clip)
        a2 = np.clip(pi2 + noise, self.env_info.action_low, self.env_info.action_high)
        q1t, _ = q_values(self.q1_target, s2, a2)
        q2t, _ = q_values(self.q2_target, s2, a2)
        return batch.rewards + cfg.gamma * (1.0 - batch.terminated) * np.minimum(q1t, q2t)

    def update(self, data, rng: Rng):
        cfg = self.cfg
        batch = self._batch(data, rng, require_full=False)
        s = self.normalize(batch.states)
        a = batch.actions

        y = self.critic_targets(batch, rng)
        c1 = critic_mse_step(self.q1, s, a, y)
        c2 = critic_mse_step(self.q2, s, a, y)

        losses = {"critic_loss": 0.5 * (c1 + c2)}
        self.updates += 1
        if self.updates % cfg.td3_policy_delay == 0:
            out, tape = self.actor.head(s)
            pi = mean_action(self.head_cfg, out)
            q_pi, qtape = q_values(self.q1.params, s, pi)
            lam = cfg.bc_alpha / max(float(np.mean(np.abs(q_pi))), 1e-8)
            b = s.shape[0]
            _, gin = mlp_backward(self.q1.params, qtape, np.full((b, 1), -lam / b))
            d_pi = gin[:, self.env_info.obs_dim:] + 2.0 * (pi - a) / b
            graw = _chain_mean_action_grad(self.head_cfg, out, d_pi)
            grads, _ = mlp_backward(self.actor.net.params, tape, graw)
            self.actor.net.step(grads)
            polyak_update(self.q1_target, self.q1.params, cfg.polyak)
            polyak_update(self.q2_target, self.q2.params, cfg.polyak)
            polyak_update(self.actor_target, self.actor.net.params, cfg.polyak)
            bc = float(np.mean(np.sum((pi - a) ** 2, axis=1)))
            losses.update({"actor_loss": float(-lam * np.mean(q_pi) + bc),
                           "bc_term": bc, "lambda": lam})
        return losses


def _chain_mean_action_grad(cfg: PolicyHeadConfig, out: PolicyHeadOutput, d_mean):
    """Chain d loss/d mean_action back to the raw head inputs."""
    n = cfg.action_dim
    graw = np.zeros_like(out.raw)
    if cfg.family == "beta":
        tot = out.alpha + out.beta
        width = cfg.action_high - cfg.action_low
        from .heads import sigmoid

        graw[:, :n] = d_mean * width * out.beta / tot**2 * sigmoid(out.raw[:, :n])
        graw[:, n:2 * n] = -d_mean * width * out.alpha / tot**2 * sigmoid(out.raw[:, n:2 * n])
        return graw
    sech2 = 1.0 - out.tanh_mu**2
    if cfg.family == "squashed_gaussian":
        outer = cfg.bound * (1.0 - np.tanh(out.mu) ** 2)
        graw[:, :n] = d_mean * outer * cfg.pre_tanh_mu_bound * sech2
    else:
        graw[:, :n] = d_mean * cfg.bound * sech2
    return graw


# ---------------------------------------------------------------------------
# registry


ONLINE_ALGOS = ("sac", "greedyac", "tawac")
OFFLINE_ALGOS = ("tawac", "awac", "iql", "inac", "td3bc")


def make_agent(env_info: EnvInfo, head_cfg: PolicyHeadConfig, cfg: AgentConfig,
               seed: int, mode: str = "online") -> AgentBase:
    algo = cfg.algo
    if mode == "online":
        if algo == "sac":
            return SacAgent(env_info, head_cfg, cfg, seed)
        if algo == "greedyac":
            return GreedyAcAgent(env_info, head_cfg, cfg, seed)
        if algo == "tawac":
            return TawacOnlineAgent(env_info, head_cfg, cfg, seed)
        raise ValueError(f"unknown online algorithm {algo!r}; choose from {ONLINE_ALGOS}")
    if mode == "offline":
        if algo == "td3bc":
            return Td3BcAgent(env_info, head_cfg, cfg, seed)
        if algo in ("tawac", "awac", "iql", "inac"):
            return AdvantageWeightedOfflineAgent(env_info, head_cfg, cfg, seed)
        raise ValueError(f"unknown offline algorithm {algo!r}; choose from {OFFLINE_ALGOS}")
    raise ValueError(f"mode must be 'online' or 'offline', got {mode!r}")
