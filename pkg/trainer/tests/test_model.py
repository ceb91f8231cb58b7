"""Network architecture, input encoding, and normalization behaviour."""

import numpy as np
import pytest
import torch

from pino_trainer import ConfigError, GridSpec, PinoNet, encode_batch
from pino_trainer.model import SpectralConv2d


class TestGridSpec:
    def test_nodes_and_spacing(self):
        g = GridSpec(n=4, x_max=3.0, y_max=6.0)
        assert np.allclose(g.nodes_x, [0.0, 1.0, 2.0, 3.0])
        assert np.allclose(g.nodes_y, [0.0, 2.0, 4.0, 6.0])
        assert g.dx == pytest.approx(1.0) and g.dy == pytest.approx(2.0)

    @pytest.mark.parametrize("kwargs", [
        dict(n=2), dict(n=8, x_max=0.0), dict(n=8, y_max=-1.0),
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            GridSpec(**kwargs)


class TestEncodeBatch:
    def test_channel_layout(self, tiny_grid, params):
        n = tiny_grid.n
        u = torch.rand(3, n, n)
        dt = torch.tensor([0.0, 0.05, 0.1])
        enc = encode_batch(u, dt, tiny_grid, params)
        assert enc.shape == (3, 4, n, n)
        assert torch.allclose(enc[:, 0], u / params.cash)
        assert torch.allclose(enc[0, 1, :, 0].double(),
                              torch.as_tensor(tiny_grid.nodes_x / tiny_grid.x_max))
        assert torch.allclose(enc[0, 2, 0, :].double(),
                              torch.as_tensor(tiny_grid.nodes_y / tiny_grid.y_max))
        for b in range(3):
            assert torch.allclose(enc[b, 3],
                                  torch.full((n, n), float(dt[b]) / params.maturity))

    def test_bad_shapes_rejected(self, tiny_grid, params):
        n = tiny_grid.n
        with pytest.raises(ConfigError):
            encode_batch(torch.zeros(2, n, n + 1), torch.zeros(2), tiny_grid, params)
        with pytest.raises(ConfigError):
            encode_batch(torch.zeros(2, n, n), torch.zeros(3), tiny_grid, params)


class TestSpectralConv:
    def test_too_many_modes_rejected(self):
        conv = SpectralConv2d(width=4, modes=12)
        with pytest.raises(ConfigError):
            conv(torch.zeros(1, 4, 16, 16))

    def test_constant_in_constant_out(self):
        # Only the (0, 0) mode is populated, so the image of a constant
        # field must again be spatially constant.
        conv = SpectralConv2d(width=3, modes=2)
        out = conv(torch.ones(1, 3, 12, 12))
        flat = out.reshape(1, 3, -1)
        assert torch.allclose(flat, flat[:, :, :1].expand_as(flat), atol=1e-6)


class TestPinoNet:
    def test_structure(self, tiny_cfg):
        m = PinoNet(tiny_cfg.width, tiny_cfg.modes, tiny_cfg.n_layers)
        assert m.width == tiny_cfg.width and m.modes == tiny_cfg.modes
        assert len(m.spectral) == tiny_cfg.n_layers
        assert len(m.bypass) == tiny_cfg.n_layers
        assert len(m.norms) == tiny_cfg.n_layers
        assert m.lift.weight.shape[:2] == (tiny_cfg.width, 4)
        assert m.proj.weight.shape[:2] == (1, tiny_cfg.width)

    def test_forward_shape_and_determinism(self, tiny_model, tiny_grid, params):
        n = tiny_grid.n
        torch.manual_seed(5)
        enc = encode_batch(torch.rand(2, n, n), torch.tensor([0.1, 0.2]),
                           tiny_grid, params)
        tiny_model.eval()
        with torch.no_grad():
            a = tiny_model(enc)
            b = tiny_model(enc)
        assert a.shape == (2, n, n)
        assert torch.equal(a, b)

    def test_mesh_transfer(self, tiny_model, params):
        # The operator is mesh-free: the same weights act on finer inputs.
        tiny_model.eval()
        for n in (16, 24, 40):
            g = GridSpec(n=n, x_max=300.0, y_max=300.0)
            enc = encode_batch(torch.rand(1, n, n), torch.tensor([0.1]), g, params)
            with torch.no_grad():
                out = tiny_model(enc)
            assert out.shape == (1, n, n)
            assert torch.isfinite(out).all()

    def test_train_and_eval_modes_differ(self, tiny_model, tiny_grid, params):
        n = tiny_grid.n
        torch.manual_seed(6)
        enc = encode_batch(torch.rand(4, n, n), torch.full((4,), 0.05),
                           tiny_grid, params)
        tiny_model.train()
        with torch.no_grad():
            tr = tiny_model(enc)
        tiny_model.eval()
        with torch.no_grad():
            ev = tiny_model(enc)
        assert not torch.allclose(tr, ev)

    def test_refresh_running_stats_moves_eval_towards_batch(self, tiny_model,
                                                            tiny_grid, params):
        n = tiny_grid.n
        torch.manual_seed(7)
        enc = encode_batch(torch.rand(4, n, n) + 2.0, torch.full((4,), 0.05),
                           tiny_grid, params)
        tiny_model.train()
        with torch.no_grad():
            target = tiny_model(enc)
        tiny_model.eval()
        with torch.no_grad():
            before = (tiny_model(enc) - target).square().mean()
        for _ in range(200):
            tiny_model.refresh_running_stats(enc)
        with torch.no_grad():
            after = (tiny_model(enc) - target).square().mean()
        assert tiny_model.training is False
        assert after < before * 1e-2

    def test_gradients_flow_to_all_parameters(self, tiny_model, tiny_grid, params):
        n = tiny_grid.n
        torch.manual_seed(8)
        enc = encode_batch(torch.rand(3, n, n), torch.full((3,), 0.08),
                           tiny_grid, params)
        tiny_model.train()
        tiny_model(enc).square().mean().backward()
        for name, prm in tiny_model.named_parameters():
            assert prm.grad is not None, name
            assert torch.isfinite(prm.grad).all(), name
