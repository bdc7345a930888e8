"""Neural-ODE surrogate of the plant dynamics."""

from .lifting import StateLifting, build_lifting, initial_lifted_state
from .mlp import Mlp
from .model import (
    LinearKnownDynamics,
    SurrogateModel,
    dataset_loss,
    load_checkpoint,
    loss_and_grad,
    loss_gradient,
    prepare,
    save_checkpoint,
    simulate_surrogate,
    simulate_trace,
)
from .train import TrainConfig, TrainingError, train
