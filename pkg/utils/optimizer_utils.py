import numpy as np
import torch

from dataclasses import dataclass


DECAY_KINDS = ['inverse_time', 'exponential', 'linear']

# Floor of the linear schedule, as a fraction of lr0, so that lr(t) stays positive
LINEAR_DECAY_FLOOR = 1e-3


@dataclass
class LrSchedule:
    lr0: float
    decay: float = 0.
    decay_kind: str = 'inverse_time'

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError(f'lr0 must be positive, got {self.lr0}')
        if self.decay < 0:
            raise ValueError(f'lr_decay must be non-negative, got {self.decay}')
        if self.decay_kind not in DECAY_KINDS:
            raise ValueError(f'Unknown decay_kind "{self.decay_kind}". Options are {DECAY_KINDS}')
        if self.decay_kind == 'exponential' and self.decay >= 1:
            raise ValueError(f'Exponential decay needs lr_decay < 1, got {self.decay}')


def lr_at(schedule, t):
    '''
    Learning rate used by the update with (0-based) index t

        inverse_time: lr0 / (1 + decay t)
        exponential:  lr0 (1 - decay)^t
        linear:       lr0 max(1 - decay t, LINEAR_DECAY_FLOOR)
    '''
    if t < 0:
        raise ValueError(f'Step index must be >= 0, got {t}')
    if schedule.decay_kind == 'inverse_time':
        return schedule.lr0 / (1 + schedule.decay * t)
    elif schedule.decay_kind == 'exponential':
        return schedule.lr0 * (1 - schedule.decay) ** t
    return schedule.lr0 * max(1 - schedule.decay * t, LINEAR_DECAY_FLOOR)


@dataclass
class AdamState:
    '''
    Read-only view of the moment estimates of a torch Adam optimizer
    '''
    m: list
    v: list
    t: int
    beta1: float
    beta2: float
    eps: float


def make_adam(params, schedule, beta1=0.9, beta2=0.999, eps=1e-8):
    return torch.optim.Adam(list(params), lr=lr_at(schedule, 0), betas=(beta1, beta2), eps=eps)


def completed_steps(optimizer):
    for group in optimizer.param_groups:
        for p in group['params']:
            state = optimizer.state.get(p, {})
            if 'step' in state:
                return int(state['step'])
    return 0


def adam_step(optimizer, params, grads, schedule):
    '''
    One Adam update with the learning rate lr_at(schedule, t), t being the
    number of updates already taken.

    Inputs:
        - optimizer: torch.optim.Adam over params
        - params: list of parameter tensors
        - grads: list of gradients, congruent with params
        - schedule: LrSchedule

    Output: the learning rate that was used
    '''
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise ValueError(f'{len(params)} parameters but {len(grads)} gradients')
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f'Gradient of shape {tuple(g.shape)} for a parameter of shape {tuple(p.shape)}')

    lr = lr_at(schedule, completed_steps(optimizer))
    for group in optimizer.param_groups:
        group['lr'] = lr
    for p, g in zip(params, grads):
        p.grad = g.detach().clone()
    optimizer.step()
    return lr


def adam_state(optimizer):
    group = optimizer.param_groups[0]
    m, v = [], []
    for p in group['params']:
        state = optimizer.state.get(p, {})
        m.append(state.get('exp_avg', torch.zeros_like(p)).detach().clone())
        v.append(state.get('exp_avg_sq', torch.zeros_like(p)).detach().clone())
    beta1, beta2 = group['betas']
    return AdamState(m, v, completed_steps(optimizer), beta1, beta2, group['eps'])


def adam_reference_update(theta, g, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    '''
    First Adam update of a scalar parameter from zero moments, by hand
    '''
    m = (1 - beta1) * g
    v = (1 - beta2) * g ** 2
    m_hat = m / (1 - beta1)
    v_hat = v / (1 - beta2)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)
