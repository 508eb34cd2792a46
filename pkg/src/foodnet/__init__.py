"""From-scratch CNN image classifier with cost-driven learning rate, affine
data expansion and a bag-of-features/SVM baseline."""

from .errors import FoodnetError
from .network import NetworkModel, build_paper_network, forward, predict
from .rng import Rng
from .train import TrainConfig, TrainCurves, train

__all__ = ["FoodnetError", "NetworkModel", "Rng", "TrainConfig", "TrainCurves",
           "build_paper_network", "forward", "predict", "train"]
__version__ = "0.1.0"
