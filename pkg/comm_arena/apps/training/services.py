"""
Epoch-based training of both teams.

Each epoch rolls a fixed number of episodes with the current exploration
rate, then trains on exactly those transitions (no cross-epoch replay):
communicating predators with the DIAL update, everything else with
independent Q-learning on the team's shared network. Target networks are
refreshed once per epoch.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError

from apps.agents.policies import EpsilonSchedule, PolicySet, compute_message, compute_q, select_action
from apps.diffnet.network import DenseNet, backward, forward
from apps.diffnet.optimizer import DEFAULT_LEARNING_RATE, AdamState, adam_step
from apps.env.modes import CommMode, Team
from apps.env.world import PREDATORS, PREY, observe_team, reset, step
from apps.metrics.runlog import EpochRecord, RunLog
from apps.training.exceptions import TrainingDivergedError, WrongModeError
from apps.training.transitions import (
    Transition, TransitionBatch, minibatch_indices, team_rows, teammate_rows,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    """
    Learning hyperparameters.

    Defaults: discount 0.97, learning rate 0.0005, epochs of 50 episodes,
    minibatches of 200 transitions.
    """
    gamma: float = 0.97
    lr: float = DEFAULT_LEARNING_RATE
    epochs: int = 2000
    batch_size: int = 200
    episodes_per_epoch: int = 50
    mode: CommMode = CommMode.NO_COMM
    seed: int = 0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_anneal_fraction: float = 0.2
    log_every: int = 10

    def __post_init__(self):
        try:
            object.__setattr__(self, 'mode', CommMode(self.mode))
        except ValueError:
            raise ValidationError(f"Unknown mode '{self.mode}'", code='invalid_mode')
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]", code='invalid')
        if self.lr <= 0:
            raise ValidationError("lr must be positive", code='invalid')
        for name in ('epochs', 'batch_size', 'episodes_per_epoch'):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1", code='invalid')
        if not 1.0 >= self.epsilon_start >= self.epsilon_end >= 0.0:
            raise ValidationError("Need 1 >= epsilon_start >= epsilon_end >= 0", code='invalid')
        if not 0.0 <= self.epsilon_anneal_fraction <= 1.0:
            raise ValidationError("epsilon_anneal_fraction must lie in [0, 1]", code='invalid')

    def epsilon_schedule(self):
        return EpsilonSchedule.for_run(
            self.epochs, self.epsilon_start, self.epsilon_end, self.epsilon_anneal_fraction,
        )


@dataclass
class TrainerState:
    """
    Everything a run mutates.

    Attributes:
        config: Hyperparameters of the run
        online: Networks being trained
        target: Frozen copies used for TD targets; refreshed per epoch
        optimizers: Adam state per online role
        schedule: Exploration schedule
        epoch: Epochs completed
        store: Transitions of the current (or last finished) epoch
    """
    config: TrainingConfig
    online: PolicySet
    target: PolicySet
    optimizers: dict
    schedule: EpsilonSchedule
    epoch: int = 0
    store: list = field(default_factory=list)

    @classmethod
    def create(cls, config, rng):
        online = PolicySet.for_mode(config.mode, rng)
        optimizers = {role: AdamState.for_network(net, lr=config.lr) for role, net in online.networks().items()}
        return cls(
            config=config,
            online=online,
            target=online.clone(),
            optimizers=optimizers,
            schedule=config.epsilon_schedule(),
        )

    @property
    def mode(self):
        return self.config.mode


@dataclass
class EpisodeResult:
    transitions: list
    predator_return: float
    prey_return: float


@dataclass
class RunResult:
    log: RunLog
    policies: PolicySet
    trainer: TrainerState


def td_target(reward, done, next_q_max, gamma):
    """``reward + gamma * next_q_max``, or just ``reward`` on terminal steps. Works element-wise."""
    target = np.where(done, reward, reward + gamma * np.where(done, 0.0, next_q_max))
    return float(target) if np.ndim(target) == 0 else target


def rollout_episode(policies, env_config, rng, epsilon, epoch=0, on_step=None):
    """
    Play one episode with fixed policies.

    At every step both predators first compute messages from their current
    observations, each A-Net then reads its own observation and the
    teammate's message, prey hear the same messages under public
    communication, and finally all four agents act epsilon-greedily.

    Args:
        on_step: Optional callback ``(state, messages, actions, step_result)``
    """
    hears = env_config.mode.prey_hear_messages
    state = reset(env_config, rng)
    predator_obs = observe_team(state, env_config, Team.PREDATORS)
    messages = policies.messages(predator_obs)
    prey_obs = observe_team(state, env_config, Team.PREY, messages[:, 0] if hears else None)

    transitions = []
    predator_return = prey_return = 0.0
    done = False
    while not done:
        predator_q = policies.predator_q(predator_obs, messages)
        prey_q = policies.prey(prey_obs)
        actions = np.array(
            [select_action(q, epsilon, rng) for q in predator_q]
            + [select_action(q, epsilon, rng) for q in prey_q]
        )
        result = step(state, actions, env_config)
        if on_step is not None:
            on_step(state, messages, actions, result)

        next_predator_obs = observe_team(result.next_state, env_config, Team.PREDATORS)
        next_messages = policies.messages(next_predator_obs)
        next_prey_obs = observe_team(
            result.next_state, env_config, Team.PREY, next_messages[:, 0] if hears else None,
        )
        transitions.append(Transition(
            predator_obs=predator_obs,
            prey_obs=prey_obs,
            messages=None if messages is None else messages[:, 0].copy(),
            actions=actions,
            predator_reward=result.predator_reward,
            prey_reward=result.prey_reward,
            next_predator_obs=next_predator_obs,
            next_prey_obs=next_prey_obs,
            done=result.done,
            epoch=epoch,
        ))
        predator_return += result.predator_reward
        prey_return += result.prey_reward

        state, done = result.next_state, result.done
        predator_obs, messages, prey_obs = next_predator_obs, next_messages, next_prey_obs

    return EpisodeResult(transitions, predator_return, prey_return)


def run_episode(trainer, env_config, rng, epsilon=None):
    """Roll one episode with the trainer's online networks."""
    if epsilon is None:
        epsilon = trainer.schedule.value(trainer.epoch)
    return rollout_episode(trainer.online, env_config, rng, epsilon, epoch=trainer.epoch)


def _selected_q_loss(q, actions, y):
    """Mean squared TD error on the taken actions and its gradient w.r.t. q."""
    rows = np.arange(len(actions))
    error = q[rows, actions] - y
    loss = float(np.mean(error ** 2))
    output_gradient = np.zeros_like(q)
    output_gradient[rows, actions] = 2.0 * error / len(actions)
    return loss, output_gradient


def dial_gradients(trainer, batch):
    """
    DIAL loss and gradients for both predators, without updating.

    For predator i the teammate message is recomputed by the online C-Net
    from the teammate's stored observation; the A-Net's gradient on that
    message input is pushed back through the C-Net. TD targets come from
    the target networks and carry no gradient.

    Returns:
        (loss, anet_gradients, cnet_gradients)
    """
    if not trainer.mode.communicates:
        raise WrongModeError(f"DIAL updates need a communication mode, not {trainer.mode.value}")
    gamma = trainer.config.gamma
    own, mate = team_rows(batch.predator_obs), teammate_rows(batch.predator_obs)
    next_own, next_mate = team_rows(batch.next_predator_obs), teammate_rows(batch.next_predator_obs)
    actions = team_rows(batch.actions[:, list(PREDATORS)])
    rewards = np.tile(batch.predator_reward, 2)
    done = np.tile(batch.done, 2)

    next_messages = compute_message(trainer.target.cnet, next_mate)
    next_q = compute_q(trainer.target.anet, next_own, next_messages)
    y = td_target(rewards, done, next_q.max(axis=1), gamma)

    messages, cnet_trace = compute_message(trainer.online.cnet, mate, with_trace=True)
    q, anet_trace = compute_q(trainer.online.anet, own, messages, with_trace=True)
    loss, output_gradient = _selected_q_loss(q, actions, y)

    anet_gradients = backward(trainer.online.anet, anet_trace, output_gradient)
    message_gradient = anet_gradients.input_gradient[:, -1:]
    cnet_gradients = backward(trainer.online.cnet, cnet_trace, message_gradient)
    return loss, anet_gradients, cnet_gradients


def dial_update(trainer, batch):
    """One Adam step on the A-Net and one on the C-Net. Returns the loss."""
    loss, anet_gradients, cnet_gradients = dial_gradients(trainer, batch)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"DIAL loss became {loss} in epoch {trainer.epoch}")
    adam_step(trainer.online.anet, anet_gradients, trainer.optimizers['anet'])
    adam_step(trainer.online.cnet, cnet_gradients, trainer.optimizers['cnet'])
    return loss


def _iql_role(trainer, team):
    team = Team(team)
    if team == Team.PREY:
        return 'prey'
    if trainer.mode.communicates:
        raise WrongModeError(f"Predators learn with DIAL in {trainer.mode.value}, not IQL")
    return 'predator'


def iql_gradients(trainer, batch, team):
    """
    Independent Q-learning loss and gradients for one team's shared network.

    Prey observations already contain any overheard messages as plain
    numbers, so nothing here touches predator networks.

    Returns:
        (loss, gradients)
    """
    role = _iql_role(trainer, team)
    if role == 'prey':
        obs, next_obs = batch.prey_obs, batch.next_prey_obs
        members, rewards = list(PREY), batch.prey_reward
    else:
        obs, next_obs = batch.predator_obs, batch.next_predator_obs
        members, rewards = list(PREDATORS), batch.predator_reward

    online_net = getattr(trainer.online, role)
    target_net = getattr(trainer.target, role)
    next_q = target_net(team_rows(next_obs))
    y = td_target(np.tile(rewards, 2), np.tile(batch.done, 2), next_q.max(axis=1), trainer.config.gamma)

    trace = forward(online_net, team_rows(obs))
    loss, output_gradient = _selected_q_loss(trace.output, team_rows(batch.actions[:, members]), y)
    return loss, backward(online_net, trace, output_gradient)


def iql_update(trainer, batch, team):
    """One Adam step on the team's IQL network. Returns the loss."""
    role = _iql_role(trainer, team)
    loss, gradients = iql_gradients(trainer, batch, team)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"IQL loss ({role}) became {loss} in epoch {trainer.epoch}")
    adam_step(getattr(trainer.online, role), gradients, trainer.optimizers[role])
    return loss


def sync_targets(trainer):
    """Target networks become clones of the online networks."""
    trainer.target = trainer.online.clone()
    return trainer


def _mean_or_none(values):
    return float(np.mean(values)) if values else None


def train_epoch(trainer, env_config, rng):
    """
    Roll an epoch of episodes, train on its transitions once, sync targets.

    Returns:
        EpochRecord of the finished epoch
    """
    config = trainer.config
    epsilon = trainer.schedule.value(trainer.epoch)
    trainer.store = []
    predator_returns, prey_returns = [], []
    for _ in range(config.episodes_per_epoch):
        episode = run_episode(trainer, env_config, rng, epsilon)
        trainer.store.extend(episode.transitions)
        predator_returns.append(episode.predator_return)
        prey_returns.append(episode.prey_return)

    dial_losses, prey_losses, predator_losses = [], [], []
    order = rng.permutation(len(trainer.store))
    for indices in minibatch_indices(order, config.batch_size):
        batch = TransitionBatch.stack([trainer.store[i] for i in indices])
        if trainer.mode.communicates:
            dial_losses.append(dial_update(trainer, batch))
        else:
            predator_losses.append(iql_update(trainer, batch, Team.PREDATORS))
        prey_losses.append(iql_update(trainer, batch, Team.PREY))

    sync_targets(trainer)
    record = EpochRecord(
        epoch=trainer.epoch,
        mean_predator_reward=float(np.mean(predator_returns)),
        mean_prey_reward=float(np.mean(prey_returns)),
        epsilon=float(epsilon),
        dial_loss=_mean_or_none(dial_losses),
        iql_loss_prey=_mean_or_none(prey_losses),
        iql_loss_pred=_mean_or_none(predator_losses),
    )
    if not record.is_finite():
        raise TrainingDivergedError(f"Non-finite statistics in epoch {trainer.epoch}: {record}")
    trainer.epoch += 1
    return record


# Resume files

def save_resume(path, trainer, rng, log):
    """Write everything needed to continue a run bit-identically."""
    data = {
        'epoch': trainer.epoch,
        'mode': trainer.mode.value,
        'seed': trainer.config.seed,
        'online': {role: net.to_checkpoint() for role, net in trainer.online.networks().items()},
        'target': {role: net.to_checkpoint() for role, net in trainer.target.networks().items()},
        'optimizers': {role: state.to_dict() for role, state in trainer.optimizers.items()},
        'rng': rng.bit_generator.state,
        'log': log.to_dicts(),
    }
    path = Path(path)
    tmp = path.with_suffix('.tmp')
    tmp.write_text(json.dumps(data))
    tmp.replace(path)
    logger.debug(f"Wrote resume file {path} at epoch {trainer.epoch}")
    return path


def load_resume(path, config):
    """
    Restore (trainer, rng, log) from a resume file.

    Raises:
        ValidationError: if the file belongs to a different mode or seed.
    """
    data = json.loads(Path(path).read_text())
    if data['mode'] != config.mode.value or data['seed'] != config.seed:
        raise ValidationError(
            f"Resume file {path} is for mode={data['mode']} seed={data['seed']}, "
            f"not mode={config.mode.value} seed={config.seed}",
            code='resume_mismatch',
        )

    def policies(section):
        return PolicySet(config.mode, **{role: DenseNet.from_checkpoint(c) for role, c in section.items()})

    trainer = TrainerState(
        config=config,
        online=policies(data['online']),
        target=policies(data['target']),
        optimizers={role: AdamState.from_dict(state) for role, state in data['optimizers'].items()},
        schedule=config.epsilon_schedule(),
        epoch=int(data['epoch']),
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = data['rng']
    return trainer, rng, RunLog.from_dicts(data['log'])


def train_run(config, env_config, seed=None, resume_path=None, resume_every=None):
    """
    Train both teams for ``config.epochs`` epochs.

    Args:
        config: TrainingConfig (its mode must match ``env_config.mode``)
        env_config: EnvConfig
        seed: Seed of the run's single seed stream; defaults to ``config.seed``
        resume_path: Resume file to continue from (if it exists) and to write
        resume_every: Write the resume file every this many epochs

    Returns:
        RunResult with the RunLog and the final online networks
    """
    if seed is not None and seed != config.seed:
        config = replace(config, seed=seed)
    if config.mode != env_config.mode:
        raise ValidationError(
            f"Training mode {config.mode.value} differs from environment mode {env_config.mode.value}",
            code='mode_mismatch',
        )

    if resume_path is not None and Path(resume_path).exists():
        trainer, rng, log = load_resume(resume_path, config)
        logger.info(f"Resuming {config.mode.value} seed {config.seed} at epoch {trainer.epoch}")
    else:
        rng = np.random.default_rng(config.seed)
        trainer = TrainerState.create(config, rng)
        log = RunLog()
        logger.info(f"Starting {config.mode.value} run, seed {config.seed}, {config.epochs} epochs")

    while trainer.epoch < config.epochs:
        record = train_epoch(trainer, env_config, rng)
        log.append(record)
        if config.log_every and (record.epoch % config.log_every == 0 or trainer.epoch == config.epochs):
            logger.info(
                f"[{config.mode.value} seed {config.seed}] epoch {record.epoch}: "
                f"predators {record.mean_predator_reward:.2f} prey {record.mean_prey_reward:.2f} "
                f"epsilon {record.epsilon:.3f}"
            )
        if resume_path is not None and resume_every and trainer.epoch % resume_every == 0:
            save_resume(resume_path, trainer, rng, log)

    return RunResult(log=log, policies=trainer.online, trainer=trainer)
