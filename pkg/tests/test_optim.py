import numpy as np
import pytest

from meshforge.optim import Adam

torch = pytest.importorskip("torch")


def test_matches_torch_adam_trajectory(rng):
    param = rng.standard_normal((4, 3, 3))
    grads = [rng.standard_normal((4, 3, 3)) for _ in range(25)]

    ours = param.copy()
    adam = Adam(lr=1e-2)

    t_param = torch.nn.Parameter(torch.tensor(param))
    t_adam = torch.optim.Adam([t_param], lr=1e-2, betas=(0.9, 0.999), eps=1e-8)

    for g in grads:
        adam.step(ours, g)
        t_adam.zero_grad()
        t_param.grad = torch.tensor(g)
        t_adam.step()
        assert np.abs(ours - t_param.detach().numpy()).max() < 1e-12


def test_first_step_magnitude():
    # bias-corrected first step moves by exactly lr (for eps << |grad|)
    adam = Adam(lr=0.05)
    param = np.zeros(3)
    adam.step(param, np.array([1.0, -2.0, 0.5]))
    assert np.allclose(np.abs(param), 0.05, atol=1e-8)


def test_state_round_trip(rng):
    adam = Adam(lr=1e-3)
    p = rng.standard_normal(5)
    for _ in range(3):
        adam.step(p, rng.standard_normal(5))
    m, v, t = adam.state_arrays()
    clone = Adam(lr=1e-3)
    clone.load_state(m.copy(), v.copy(), t)
    p2 = p.copy()
    g = rng.standard_normal(5)
    adam.step(p, g)
    clone.step(p2, g)
    assert np.array_equal(p, p2)
