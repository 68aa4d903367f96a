from .genetic import ThresholdPolicy, ThresholdStrategy
from .greedy import GreedyPolicy, greedy_decide
from .qlearning import QLearningPolicy, QTable

__all__ = [
    "GreedyPolicy",
    "QLearningPolicy",
    "QTable",
    "ThresholdPolicy",
    "ThresholdStrategy",
    "greedy_decide",
]
