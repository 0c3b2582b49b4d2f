import pytest
import torch
from torch import nn

from src.codecs.codec import IdentityCodec
from src.diffusion.schedule import NoiseSchedule, make_schedule
from src.utils.errors import clear_events


class ConstantScore(nn.Module):
    """ε_θ(x, t) = value everywhere; carries one parameter so dtype lookups work."""

    def __init__(self, value: float = 0.0, dtype: torch.dtype = torch.float64) -> None:
        super().__init__()
        self.value = value
        self.anchor = nn.Parameter(torch.zeros((), dtype=dtype), requires_grad=False)
        self.calls = 0

    def forward(self, x: torch.Tensor, t) -> torch.Tensor:
        self.calls += 1
        return torch.full_like(x, self.value)


class LinearScore(nn.Module):
    """ε_θ(x, t) = w·x + b with fixed scalars, a smooth non-trivial score for gradient checks."""

    def __init__(self, w: float = 0.3, b: float = 0.05) -> None:
        super().__init__()
        self.w = nn.Parameter(torch.tensor(w, dtype=torch.float64), requires_grad=False)
        self.b = b

    def forward(self, x: torch.Tensor, t) -> torch.Tensor:
        return self.w * torch.tanh(x) + self.b


@pytest.fixture(autouse=True)
def _fresh_events():
    clear_events()
    yield
    clear_events()


@pytest.fixture
def zero_net():
    return ConstantScore(0.0)


@pytest.fixture
def linear_net():
    return LinearScore()


@pytest.fixture
def identity_schedule() -> NoiseSchedule:
    """ᾱ ≡ 1 over two steps: with any ε the reverse process is the identity."""
    return NoiseSchedule.from_alpha_bars([1.0, 1.0], [1, 0])


@pytest.fixture
def small_schedule() -> NoiseSchedule:
    return make_schedule(1000, 2)


@pytest.fixture
def identity_codec():
    return IdentityCodec(1)


@pytest.fixture
def rng():
    return torch.Generator(device="cpu").manual_seed(1234)


def randn(*shape, generator=None):
    return torch.randn(shape, generator=generator, dtype=torch.float64)


def rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    return float((a - b).norm() / max(float(b.norm()), 1e-300))
