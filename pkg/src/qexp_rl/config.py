"""Declarative experiment configuration: an INI file with [run], [agent],
[policy], and optional [sweep] sections, copied verbatim into every run
directory as the audit trail.

Mode presets follow the online/offline default tables: online runs use
64x64 networks, batch 32, polyak 0.01, Adam beta2 0.999; offline runs use
256x256, batch 256, polyak 0.005, beta2 0.99. Every preset is overridable
in [agent].
"""

import configparser
from dataclasses import dataclass, field, replace

from .agents import OFFLINE_ALGOS, ONLINE_ALGOS, AgentConfig, EnvInfo
from .envs import ENVS
from .heads import FAMILIES, PolicyHeadConfig


class ConfigError(ValueError):
    pass


ONLINE_PRESET = dict(hidden=(64, 64), batch_size=32, polyak=0.01, adam_beta2=0.999)
OFFLINE_PRESET = dict(hidden=(256, 256), batch_size=256, polyak=0.005, adam_beta2=0.99)

# evaluation protocols: best-run (freeze every 1000 steps, 1 episode) and
# sweep (every 10000 steps, averaged over 3 episodes)
EVAL_PROTOCOLS = {"best": (1000, 1), "sweep": (10000, 3)}


@dataclass
class SweepSpec:
    critic_lrs: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    actor_lr_mults: tuple = (0.1, 1.0, 10.0)
    temperatures: tuple = (0.01, 0.1, 1.0)
    sweep_seeds: tuple = (0, 1, 2, 3, 4)
    best_seeds: tuple = (5, 6, 7, 8, 9)

    def __post_init__(self):
        if not (self.critic_lrs and self.actor_lr_mults and self.temperatures):
            raise ConfigError("sweep grid must be nonempty")
        if set(self.sweep_seeds) & set(self.best_seeds):
            raise ConfigError("sweep seeds must be disjoint from best-run seeds")

    def grid(self):
        """Grid points in lexicographic order (the tie-break order)."""
        return [
            (lr, mult, temp)
            for lr in self.critic_lrs
            for mult in self.actor_lr_mults
            for temp in self.temperatures
        ]


@dataclass
class ExperimentConfig:
    env_name: str = "pendulum"
    algo: str = "sac"
    family: str = "gaussian"
    mode: str = "online"
    steps: int = 100_000
    eval_interval: int = 1000
    eval_episodes: int = 1
    seeds: tuple = (0,)
    out_dir: str = "runs"
    run_id: int = 0
    dataset_path: str = ""
    agent: AgentConfig = field(default_factory=AgentConfig)
    policy_overrides: dict = field(default_factory=dict)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    source_text: str = ""  # verbatim config file contents, if loaded

    def __post_init__(self):
        if self.steps <= 0:
            raise ConfigError("steps must be positive")
        if self.eval_interval <= 0 or self.steps % self.eval_interval != 0:
            raise ConfigError("eval_interval must divide steps cleanly")
        if self.eval_episodes <= 0:
            raise ConfigError("eval_episodes must be positive")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.env_name not in ENVS:
            raise ConfigError(f"unknown env {self.env_name!r}")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown policy family {self.family!r}")
        if self.mode not in ("online", "offline"):
            raise ConfigError("mode must be online or offline")
        algos = ONLINE_ALGOS if self.mode == "online" else OFFLINE_ALGOS
        if self.algo not in algos:
            raise ConfigError(f"{self.algo!r} is not a {self.mode} algorithm ({algos})")
        if self.mode == "offline" and not self.dataset_path:
            raise ConfigError("offline mode needs dataset_path")
        self.agent = replace(self.agent, algo=self.algo)

    def head_config(self, env_info: EnvInfo) -> PolicyHeadConfig:
        kw = dict(
            family=self.family,
            action_dim=env_info.action_dim,
            action_low=env_info.action_low,
            action_high=env_info.action_high,
        )
        kw.update(self.policy_overrides)
        return PolicyHeadConfig(**kw)


_AGENT_FLOAT_KEYS = (
    "gamma temperature q_prime rho expectile bc_alpha critic_lr actor_lr_mult "
    "polyak adam_beta1 adam_beta2 adam_eps weight_clip td3_policy_noise "
    "td3_noise_clip").split()
_AGENT_INT_KEYS = (
    "batch_size n_proposal buffer_capacity v_samples weight_samples "
    "sac_actor_samples td3_policy_delay").split()
_POLICY_FLOAT_KEYS = "q nu_base log_std_min log_std_max squash_eps pre_tanh_mu_bound".split()
_POLICY_INT_KEYS = ["replacement_batch"]


def _parse_tuple(text, cast=float):
    items = [t for t in text.replace(",", " ").split() if t]
    return tuple(cast(t) for t in items)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf8") as fh:
        text = fh.read()
    return parse_config(text)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if "run" not in cp:
        raise ConfigError("config needs a [run] section")
    run = cp["run"]

    mode = run.get("mode", "online")
    agent_kw = dict(ONLINE_PRESET if mode == "online" else OFFLINE_PRESET)
    if "agent" in cp:
        sec = cp["agent"]
        for key in _AGENT_FLOAT_KEYS:
            if key in sec:
                agent_kw[key] = sec.getfloat(key)
        for key in _AGENT_INT_KEYS:
            if key in sec:
                agent_kw[key] = sec.getint(key)
        if "hidden" in sec:
            agent_kw["hidden"] = _parse_tuple(sec["hidden"], int)
        if "v_mode" in sec:
            agent_kw["v_mode"] = sec["v_mode"].strip()
        if "normalize_obs" in sec:
            agent_kw["normalize_obs"] = sec.getboolean("normalize_obs")

    policy_overrides = {}
    if "policy" in cp:
        sec = cp["policy"]
        for key in _POLICY_FLOAT_KEYS:
            if key in sec:
                policy_overrides[key] = sec.getfloat(key)
        for key in _POLICY_INT_KEYS:
            if key in sec:
                policy_overrides[key] = sec.getint(key)

    sweep_kw = {}
    if "sweep" in cp:
        sec = cp["sweep"]
        if "critic_lrs" in sec:
            sweep_kw["critic_lrs"] = _parse_tuple(sec["critic_lrs"])
        if "actor_lr_mults" in sec:
            sweep_kw["actor_lr_mults"] = _parse_tuple(sec["actor_lr_mults"])
        if "temperatures" in sec:
            sweep_kw["temperatures"] = _parse_tuple(sec["temperatures"])
        if "sweep_seeds" in sec:
            sweep_kw["sweep_seeds"] = _parse_tuple(sec["sweep_seeds"], int)
        if "best_seeds" in sec:
            sweep_kw["best_seeds"] = _parse_tuple(sec["best_seeds"], int)

    protocol = run.get("eval_protocol", "")
    if protocol:
        if protocol not in EVAL_PROTOCOLS:
            raise ConfigError(f"unknown eval_protocol {protocol!r}")
        interval, episodes = EVAL_PROTOCOLS[protocol]
    else:
        interval, episodes = 1000, 1
    interval = run.getint("eval_interval", interval)
    episodes = run.getint("eval_episodes", episodes)

    try:
        agent_cfg = AgentConfig(algo=run.get("agent", "sac"), **agent_kw)
        return ExperimentConfig(
            env_name=run.get("env", "pendulum"),
            algo=run.get("agent", "sac"),
            family=run.get("policy", "gaussian"),
            mode=mode,
            steps=run.getint("steps", 100_000),
            eval_interval=interval,
            eval_episodes=episodes,
            seeds=_parse_tuple(run.get("seeds", "0"), int),
            out_dir=run.get("out_dir", "runs"),
            run_id=run.getint("run_id", 0),
            dataset_path=run.get("dataset_path", ""),
            agent=agent_cfg,
            policy_overrides=policy_overrides,
            sweep=SweepSpec(**sweep_kw),
            source_text=text,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def render_config(cfg: ExperimentConfig) -> str:
    """Config text to check into a run directory: the verbatim source if the
    config came from a file, otherwise a faithful rendering."""
    if cfg.source_text:
        return cfg.source_text
    lines = [
        "[run]",
        f"env = {cfg.env_name}",
        f"agent = {cfg.algo}",
        f"policy = {cfg.family}",
        f"mode = {cfg.mode}",
        f"steps = {cfg.steps}",
        f"eval_interval = {cfg.eval_interval}",
        f"eval_episodes = {cfg.eval_episodes}",
        f"seeds = {','.join(str(s) for s in cfg.seeds)}",
        f"out_dir = {cfg.out_dir}",
        f"run_id = {cfg.run_id}",
    ]
    if cfg.dataset_path:
        lines.append(f"dataset_path = {cfg.dataset_path}")
    a = cfg.agent
    lines += [
        "",
        "[agent]",
        f"gamma = {a.gamma!r}",
        f"temperature = {a.temperature!r}",
        f"q_prime = {a.q_prime!r}",
        f"rho = {a.rho!r}",
        f"n_proposal = {a.n_proposal}",
        f"expectile = {a.expectile!r}",
        f"bc_alpha = {a.bc_alpha!r}",
        f"critic_lr = {a.critic_lr!r}",
        f"actor_lr_mult = {a.actor_lr_mult!r}",
        f"batch_size = {a.batch_size}",
        f"polyak = {a.polyak!r}",
        f"hidden = {','.join(str(h) for h in a.hidden)}",
        f"adam_beta1 = {a.adam_beta1!r}",
        f"adam_beta2 = {a.adam_beta2!r}",
        f"buffer_capacity = {a.buffer_capacity}",
        f"v_mode = {a.v_mode}",
        f"normalize_obs = {a.normalize_obs}",
        f"weight_clip = {a.weight_clip!r}",
    ]
    if cfg.policy_overrides:
        lines += ["", "[policy]"]
        lines += [f"{k} = {v!r}" for k, v in cfg.policy_overrides.items()]
    return "\n".join(lines) + "\n"
