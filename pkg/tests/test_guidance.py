import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from meshforge.camera import Camera
from meshforge.errors import ConfigError, GuidanceError, ProtocolError
from meshforge.guidance import (
    AnalyticOracle,
    GuidanceProvider,
    LatentMapper,
    NoiseSchedule,
    RemoteProvider,
    SdsConfig,
    add_noise,
    decode_tensor,
    encode_tensor,
    predicted_clean_latent,
    sds_gradient,
    sds_sample,
)

SCHEDULE = NoiseSchedule.scaled_linear()


class RecordingRng:
    """Generator wrapper that remembers the last standard-normal draw."""

    def __init__(self, seed):
        self._rng = np.random.default_rng(seed)
        self.last_normal = None

    def integers(self, *args, **kwargs):
        return self._rng.integers(*args, **kwargs)

    def standard_normal(self, *args, **kwargs):
        self.last_normal = self._rng.standard_normal(*args, **kwargs)
        return self.last_normal


class FnDenoiser(GuidanceProvider):
    capabilities = frozenset({"denoise"})

    def __init__(self, fn, latent_spec=(8, 8, 4)):
        self.fn = fn
        self.latent_spec = latent_spec

    def denoise(self, latent, prompt, t, guidance_scale, view=None):
        return self.fn(latent, t)


# ---------------------------------------------------------------------------
# schedule and add_noise


def test_schedule_invariants():
    ab = SCHEDULE.alpha_bar
    assert (np.diff(ab) < 0).all()
    assert ((ab > 0) & (ab < 1)).all()
    assert SCHEDULE.num_steps == 1000


def test_schedule_rejects_bad_arrays():
    with pytest.raises(ConfigError):
        NoiseSchedule(np.array([0.5, 0.6]))
    with pytest.raises(ConfigError):
        NoiseSchedule(np.array([0.9, 1.1]))


def test_add_noise_near_one_limit():
    schedule = NoiseSchedule(np.array([0.9999, 0.5]))
    x = np.full((4, 4, 3), 2.0)
    eps = np.random.default_rng(0).standard_normal((4, 4, 3))
    out = add_noise(x, 0, eps, schedule)
    assert np.linalg.norm(out - x) <= 1e-2 * np.linalg.norm(eps) + 1e-4 * np.linalg.norm(x)


def test_add_noise_zero_signal():
    x = np.zeros((3, 3, 4), dtype=np.float32)
    eps = np.random.default_rng(1).standard_normal((3, 3, 4)).astype(np.float32)
    t = 500
    out = add_noise(x, t, eps, SCHEDULE)
    b = np.float32(np.sqrt(1.0 - SCHEDULE.alpha_bar[t]))
    assert np.array_equal(out, b * eps)


def test_add_noise_quarter_alpha_bar():
    # alpha_bar = 0.25 with ones for both x and eps: every entry 0.5 + sqrt(0.75)
    schedule = NoiseSchedule(np.array([0.5, 0.25, 0.1]))
    out = add_noise(np.ones((2, 2)), 1, np.ones((2, 2)), schedule)
    assert np.allclose(out, 0.5 + np.sqrt(0.75), atol=1e-15)


def test_add_noise_shape_mismatch():
    with pytest.raises(ValueError):
        add_noise(np.zeros((2, 2)), 10, np.zeros((3, 3)), SCHEDULE)


def test_add_noise_linear(rng):
    x1, x2 = rng.standard_normal((2, 5, 5))
    e1, e2 = rng.standard_normal((2, 5, 5))
    t = 333
    combined = add_noise(2.0 * x1 + 3.0 * x2, t, 0.5 * e1 - 1.5 * e2, SCHEDULE)
    separate = (
        2.0 * add_noise(x1, t, np.zeros_like(e1), SCHEDULE)
        + 3.0 * add_noise(x2, t, np.zeros_like(e1), SCHEDULE)
        + 0.5 * add_noise(np.zeros_like(x1), t, e1, SCHEDULE)
        - 1.5 * add_noise(np.zeros_like(x1), t, e2, SCHEDULE)
    )
    assert np.abs(combined - separate).max() < 1e-12


# ---------------------------------------------------------------------------
# SDS gradients


def test_perfect_denoiser_exactly_zero():
    rng = RecordingRng(123)
    provider = FnDenoiser(lambda latent, t: rng.last_normal)
    x = np.random.default_rng(9).standard_normal((8, 8, 4)).astype(np.float32)
    for _ in range(5):
        grad = sds_gradient(x, "p", provider, SdsConfig(), rng, SCHEDULE)
        assert (grad == 0.0).all()


def test_constant_offset_mock():
    rng = RecordingRng(77)
    offset = np.float32(0.25)
    provider = FnDenoiser(lambda latent, t: rng.last_normal + offset)
    x = np.zeros((8, 8, 4), dtype=np.float32)
    config = SdsConfig(weight_mode="one")
    grad = sds_gradient(x, "p", provider, config, rng, SCHEDULE)
    assert np.allclose(grad, offset, atol=1e-7)


def test_sds_respects_timestep_band():
    provider = FnDenoiser(lambda latent, t: np.zeros_like(latent))
    x = np.zeros((8, 8, 4), dtype=np.float32)
    config = SdsConfig(t_min=0.4, t_max=0.6)
    rng = np.random.default_rng(5)
    for _ in range(50):
        _, t, _, _ = sds_sample(x, "p", provider, config, rng, SCHEDULE)
        assert 400 <= t <= 600


def test_latent_echo_monte_carlo_expectation():
    # eps_hat = x_t: E[grad] = E[w(t) sqrt(alpha_bar_t)] * x
    provider = FnDenoiser(lambda latent, t: latent)
    gen = np.random.default_rng(31)
    x = gen.uniform(0.5, 1.5, size=(8, 8, 4)).astype(np.float32)
    config = SdsConfig()
    total = np.zeros_like(x, dtype=np.float64)
    coef = 0.0
    n = 10_000
    for _ in range(n):
        grad, t, _, _ = sds_sample(x, "p", provider, config, gen, SCHEDULE)
        total += grad
        coef += sds_weight(t := int(t), config, SCHEDULE) * np.sqrt(SCHEDULE.alpha_bar[t])
    mean = total / n
    expected = (coef / n) * x.astype(np.float64)
    rel = np.linalg.norm(mean - expected) / np.linalg.norm(expected)
    assert rel < 0.05


def test_sds_rejects_missing_capability():
    class NoCaps(GuidanceProvider):
        capabilities = frozenset()

    with pytest.raises(GuidanceError):
        sds_gradient(np.zeros((64, 64, 4), np.float32), "p", NoCaps(), SdsConfig(),
                     np.random.default_rng(0), SCHEDULE)


def test_sds_config_validation():
    with pytest.raises(ConfigError):
        SdsConfig(t_min=0.9, t_max=0.1)
    with pytest.raises(ConfigError):
        SdsConfig(weight_mode="bogus")
    with pytest.raises(ConfigError):
        SdsConfig(guidance_scale=0.5)


def test_predicted_clean_latent_inverts():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((6, 6, 4))
    eps = rng.standard_normal((6, 6, 4))
    t = 700
    x_t = add_noise(x, t, eps, SCHEDULE)
    assert np.abs(predicted_clean_latent(x_t, eps, t, SCHEDULE) - x).max() < 1e-10


from meshforge.guidance import sds_weight  # noqa: E402 - used by the MC test


# ---------------------------------------------------------------------------
# latent mapping


def test_latent_mapper_constant():
    mapper = LatentMapper(64, 64, (16, 16, 3))
    latent = mapper.forward(np.full((64, 64, 3), 0.7))
    assert np.abs(latent - 0.7).max() < 1e-12


def test_latent_mapper_2x2_mean():
    mapper = LatentMapper(2, 2, (1, 1, 3))
    image = np.zeros((2, 2, 3))
    image[0, 0] = image[0, 1] = 0.0
    image[1, 0] = image[1, 1] = 1.0
    assert np.allclose(mapper.forward(image), 0.5)


def test_latent_mapper_pads_fourth_channel():
    mapper = LatentMapper(32, 32, (8, 8, 4))
    latent = mapper.forward(np.zeros((32, 32, 3)))
    assert latent.shape == (8, 8, 4)
    assert (latent[:, :, 3] == 0.5).all()


def test_latent_mapper_adjoint_identity(rng):
    # <forward(x), y> == <x, adjoint(y)> for the 3 image channels
    mapper = LatentMapper(48, 40, (12, 10, 4))
    x = rng.standard_normal((48, 40, 3))
    y = rng.standard_normal((12, 10, 4))
    y[:, :, 3] = 0.0  # pad channel carries no gradient
    lhs = float(np.sum(mapper.forward(x) * y))
    rhs = float(np.sum(x * mapper.adjoint(y)))
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def test_latent_mapper_non_divisible_sizes(rng):
    mapper = LatentMapper(10, 7, (3, 2, 3))
    x = rng.standard_normal((10, 7, 3))
    latent = mapper.forward(x)
    assert latent.shape == (3, 2, 3)
    # every output row averages to weight 1; every input row is used n_out/n_in
    assert np.allclose(mapper._rows.sum(axis=1), 1.0)
    assert np.allclose(mapper._rows.sum(axis=0), 3 / 10)


def test_latent_mapper_rejects_upsampling():
    with pytest.raises(ValueError):
        LatentMapper(8, 8, (16, 16, 3))


# ---------------------------------------------------------------------------
# analytic oracle


def make_oracle(size=32, latent=(8, 8, 4)):
    cams = [Camera(0.0, 0.0, 2.0, width=size, height=size),
            Camera(np.pi, 0.0, 2.0, width=size, height=size)]
    rng = np.random.default_rng(11)
    targets = [rng.uniform(size=(size, size, 3)).astype(np.float32) for _ in cams]
    return AnalyticOracle(cams, targets, SCHEDULE, latent)


def test_oracle_fixed_point_zero_gradient():
    oracle = make_oracle()
    mapper = LatentMapper(32, 32, oracle.latent_spec)
    x = np.asarray(mapper.forward(oracle.targets[0].astype(np.float64)), np.float32)
    rng = np.random.default_rng(0)
    grad = sds_gradient(x, "p", oracle, SdsConfig(), rng, SCHEDULE, view=0)
    assert np.abs(grad).max() < 1e-5


def test_oracle_gradient_proportional_to_residual():
    oracle = make_oracle()
    mapper = LatentMapper(32, 32, oracle.latent_spec)
    z = np.asarray(mapper.forward(oracle.targets[0].astype(np.float64)), np.float32)
    x = z + np.float32(0.1)
    t = 400
    eps_hat = oracle.denoise(add_noise(x, t, np.zeros_like(x), SCHEDULE), "p", t, 1.0, view=0)
    ab = SCHEDULE.alpha_bar[t]
    lam = np.sqrt(ab) / np.sqrt(1 - ab)
    assert np.allclose(eps_hat, lam * 0.1, rtol=1e-4, atol=1e-5)


def test_oracle_unknown_camera():
    oracle = make_oracle()
    with pytest.raises(GuidanceError):
        oracle.depth_to_image(np.zeros((32, 32), np.float32), "p", view=None)
    with pytest.raises(GuidanceError):
        oracle.refine(np.zeros((32, 32, 3), np.float32), "p", 15, view=7)


def test_oracle_inpaint_masking():
    oracle = make_oracle()
    image = np.full((32, 32, 3), 0.25, dtype=np.float32)
    empty = np.zeros((32, 32), dtype=np.float32)
    out = oracle.inpaint(image, empty, None, "p", view=1)
    assert np.array_equal(out, image)
    full = np.ones((32, 32), dtype=np.float32)
    out = oracle.inpaint(image, full, None, "p", view=1)
    assert np.array_equal(out, oracle.targets[1])
    half = np.zeros((32, 32), dtype=np.float32)
    half[:16] = 1.0
    out = oracle.inpaint(image, half, None, "p", view=1)
    assert np.array_equal(out[:16], oracle.targets[1][:16])
    assert np.array_equal(out[16:], image[16:])


def test_oracle_requires_matched_lengths():
    with pytest.raises(ConfigError):
        AnalyticOracle([Camera(0, 0, 2)], [], SCHEDULE)


# ---------------------------------------------------------------------------
# tensor codec and remote provider


def test_tensor_round_trip(rng):
    arr = rng.standard_normal((64, 64, 4)).astype(np.float32)
    back = decode_tensor(encode_tensor(arr))
    assert np.array_equal(back, arr)
    assert back.dtype == np.float32


def test_tensor_codec_errors():
    with pytest.raises(ProtocolError):
        decode_tensor({"shape": [2], "dtype": "f64", "data": ""})
    with pytest.raises(ProtocolError):
        decode_tensor({"shape": [2], "dtype": "f32"})
    with pytest.raises(ProtocolError):
        decode_tensor({"shape": [3], "dtype": "f32", "data": "AAAA"})


class StubBridge(BaseHTTPRequestHandler):
    fail_denoise = 0
    calls = []

    def _send(self, code, payload):
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/capabilities":
            self._send(200, {"capabilities": ["denoise", "refine"],
                             "latent": {"h": 8, "w": 8, "c": 4}})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).calls.append(self.path)
        if self.path == "/denoise":
            if type(self).fail_denoise > 0:
                type(self).fail_denoise -= 1
                self._send(500, {"error": "transient"})
                return
            self._send(200, {"eps_hat": body["latent"]})  # echo
        elif self.path == "/refine":
            self._send(200, {"image": body["image"]})
        else:
            self._send(404, {"error": "not found"})

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_bridge():
    server = ThreadingHTTPServer(("127.0.0.1", 0), StubBridge)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    StubBridge.fail_denoise = 0
    StubBridge.calls = []
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_remote_handshake(stub_bridge):
    provider = RemoteProvider(stub_bridge)
    assert "denoise" in provider.capabilities
    assert provider.latent_spec == (8, 8, 4)


def test_remote_denoise_round_trip_bit_exact(stub_bridge, rng):
    provider = RemoteProvider(stub_bridge)
    latent = rng.standard_normal((8, 8, 4)).astype(np.float32)
    eps_hat = provider.denoise(latent, "p", 10, 100.0)
    assert np.array_equal(eps_hat, latent)


def test_remote_retries_with_backoff(stub_bridge):
    provider = RemoteProvider(stub_bridge, retries=3, backoff_s=0.05)
    StubBridge.fail_denoise = 5  # more failures than retries
    start = time.time()
    with pytest.raises(GuidanceError, match="500"):
        provider.denoise(np.zeros((8, 8, 4), np.float32), "p", 1, 1.0)
    elapsed = time.time() - start
    assert elapsed >= 0.05 + 0.1  # backoff sum for attempts 2 and 3
    assert StubBridge.calls.count("/denoise") == 3


def test_remote_recovers_within_retries(stub_bridge):
    provider = RemoteProvider(stub_bridge, retries=3, backoff_s=0.01)
    StubBridge.fail_denoise = 2
    out = provider.denoise(np.ones((8, 8, 4), np.float32), "p", 1, 1.0)
    assert np.array_equal(out, np.ones((8, 8, 4), np.float32))


def test_remote_missing_capability(stub_bridge):
    provider = RemoteProvider(stub_bridge)
    with pytest.raises(GuidanceError):
        provider.inpaint(np.zeros((4, 4, 3), np.float32), np.zeros((4, 4), np.float32),
                         None, "p")
