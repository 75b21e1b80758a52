"""SGD with momentum and the plateau learning-rate scheduler."""
from dataclasses import asdict, dataclass


def sgd_step(store, lr, momentum=0.9, weight_decay=0.0):
    """In-place update ``v <- m v + g + wd p``; ``p <- p - lr v``."""
    for name, p in store.params.items():
        g = store.grads[name]
        v = store.momentum[name]
        if weight_decay:
            g = g + weight_decay * p
        v *= momentum
        v += g
        p -= lr * v


@dataclass
class PlateauScheduler:
    """Multiply the rate by ``factor`` once validation loss has not strictly
    improved for ``patience`` epochs, and at least ``cooldown`` epochs have
    passed since the previous decay."""

    current_lr: float = 1e-3
    patience: int = 5
    cooldown: int = 5
    factor: float = 0.5
    best_val_loss: float = float("inf")
    epochs_since_improvement: int = 0
    # None: start as if the last decay were a full cooldown ago
    epochs_since_last_decay: int = None

    def __post_init__(self):
        if not self.current_lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs_since_last_decay is None:
            self.epochs_since_last_decay = self.cooldown

    def step(self, val_loss):
        """Consume one epoch's validation loss; returns True if the rate decayed."""
        self.epochs_since_last_decay += 1
        if val_loss < self.best_val_loss:
            self.best_val_loss = float(val_loss)
            self.epochs_since_improvement = 0
        else:
            self.epochs_since_improvement += 1
        if self.epochs_since_improvement >= self.patience and self.epochs_since_last_decay >= self.cooldown:
            self.current_lr *= self.factor
            self.epochs_since_improvement = 0
            self.epochs_since_last_decay = 0
            return True
        return False

    def state_dict(self):
        d = asdict(self)
        if d["best_val_loss"] == float("inf"):
            d["best_val_loss"] = None
        return d

    @classmethod
    def from_state(cls, d):
        d = dict(d)
        if d.get("best_val_loss") is None:
            d["best_val_loss"] = float("inf")
        return cls(**d)


def plateau_step(state: PlateauScheduler, val_loss) -> PlateauScheduler:
    """Functional form: returns an updated copy of ``state``."""
    new = PlateauScheduler.from_state(state.state_dict())
    new.step(val_loss)
    return new
