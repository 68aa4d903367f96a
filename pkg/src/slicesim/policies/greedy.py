"""Baseline admission: accept whenever the request fits at full scale."""

from __future__ import annotations

from typing import Sequence

from ..env import Action, Policy, SliceEnv
from ..model import fits
from ..model import SliceRequest


def greedy_decide(free: Sequence[float], demand: Sequence[float]) -> Action:
    """Class-blind first fit: never scales down, never looks past the head."""
    return Action.Accept if fits(demand, free) else Action.Reject


class GreedyPolicy(Policy):
    name = "greedy"

    def decide(self, env: SliceEnv, request: SliceRequest) -> Action:
        return greedy_decide(env.free(), env.spec_of(request).demand)
