from ..errors import ConfigError, ContractError
from ..schemas import TrainConfig


def validate_schedule(config: TrainConfig, total_steps: int) -> None:
    if config.lr_max <= 0:
        raise ConfigError("lr_max", "must be positive")
    if config.warmup_steps < 0:
        raise ConfigError("warmup_steps", "must be non-negative")
    if total_steps <= 0:
        raise ConfigError("total_steps", "must be positive")
    if config.warmup_steps >= total_steps:
        raise ConfigError("warmup_steps", f"{config.warmup_steps} must be below total_steps={total_steps}")


def lr_at(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear warmup to ``lr_max`` at ``warmup_steps``, then linear decay to 0 at ``total_steps``."""
    validate_schedule(config, total_steps)
    if step < 0 or step > total_steps:
        raise ContractError(f"step {step} outside 0..{total_steps}")
    warmup = config.warmup_steps
    if warmup and step <= warmup:
        return config.lr_max * step / warmup
    return config.lr_max * (total_steps - step) / (total_steps - warmup)
