import torch
from parameterized import parameterized

from mvsd.enums import ConverterRoleEnum
from mvsd.libraries.diffusion import make_schedule
from mvsd.libraries.mutual_learning import (
    CycleError,
    breakdown,
    estimate_x0,
    mean_l1,
    mutual_loss,
    paired_cycle_losses,
    style_loss,
    unpaired_anechoic_cycle,
    unpaired_natural_cycle,
)
from mvsd.libraries.networks import ControllableUnet, UnetConfig
from mvsd.tests.libraries.client import MvsdTestClient
from mvsd.tests.libraries.fixtures import X0Stub, dereverberate_offset, reverberate_offset, zeros

# a fixed 4x4 clean grid and its "reverberant" counterpart one offset above
CLEAN = torch.tensor(
    [
        [-0.50, -0.25, 0.00, 0.25],
        [0.10, -0.10, 0.20, -0.20],
        [0.05, -0.45, 0.15, 0.00],
        [-0.30, 0.25, -0.05, 0.10],
    ],
    dtype=torch.float64,
)[None, None]
REVERB = CLEAN + 0.25


class CycleTests(MvsdTestClient):
    def setUp(self):
        super().setUp()
        self.s = make_schedule(20)
        self.generator = torch.Generator().manual_seed(0)
        self.oracle_f = X0Stub(self.s, reverberate_offset)
        self.oracle_g = X0Stub(self.s, dereverberate_offset, ConverterRoleEnum.DEREVERBERATOR)
        self.zero_f = X0Stub(self.s, zeros)
        self.zero_g = X0Stub(self.s, zeros, ConverterRoleEnum.DEREVERBERATOR)

    def test_oracle_converters_close_both_cycles(self):
        f, g = self.oracle_f, self.oracle_g
        delta_c, delta_r = paired_cycle_losses(f, g, None, CLEAN, REVERB, self.s, self.generator)
        self.assertTensorsClose(delta_c, [0.0], atol=1e-6)
        self.assertTensorsClose(delta_r, [0.0], atol=1e-6)

    def test_zero_converters_leave_the_mean_magnitude(self):
        delta_c, delta_r = paired_cycle_losses(self.zero_f, self.zero_g, None, CLEAN, REVERB, self.s, self.generator)
        self.assertAlmostEqual(float(delta_c), float(CLEAN.abs().mean()), places=6)
        self.assertAlmostEqual(float(delta_c), 2.95 / 16, places=6)
        self.assertAlmostEqual(float(delta_r), float(REVERB.abs().mean()), places=6)

    def test_roles_are_symmetric(self):
        f = X0Stub(self.s, lambda x: torch.tanh(x) + 0.1)
        g = X0Stub(self.s, lambda x: 0.5 * x)
        forward = paired_cycle_losses(f, g, None, CLEAN, REVERB, self.s, torch.Generator().manual_seed(1))
        mirrored = paired_cycle_losses(g, f, None, REVERB, CLEAN, self.s, torch.Generator().manual_seed(2))
        self.assertTensorsClose(forward[0], mirrored[1], atol=1e-6)
        self.assertTensorsClose(forward[1], mirrored[0], atol=1e-6)

    def test_multi_step_cycles(self):
        delta_c, delta_r = paired_cycle_losses(
            self.oracle_f, self.oracle_g, None, CLEAN, REVERB, self.s, self.generator, cycle_steps=4
        )
        self.assertTensorsClose(delta_c, [0.0], atol=1e-6)
        self.assertTensorsClose(delta_r, [0.0], atol=1e-6)

    def test_estimate_is_clamped(self):
        stub = X0Stub(self.s, lambda x: x + 5.0)
        estimate = estimate_x0(stub, CLEAN, CLEAN, None, self.s, self.generator)
        self.assertTensorsClose(estimate, torch.ones_like(CLEAN), atol=1e-6)

    def test_natural_cycle(self):
        oracle = unpaired_natural_cycle(self.oracle_f, self.oracle_g, None, REVERB, self.s, self.generator)
        zero = unpaired_natural_cycle(self.zero_f, self.zero_g, None, REVERB, self.s, self.generator)
        self.assertTensorsClose(oracle, [0.0], atol=1e-6)
        self.assertAlmostEqual(float(zero), float(REVERB.abs().mean()), places=6)
        self.assertLess(float(oracle), float(zero))

    def test_anechoic_cycle(self):
        pool = torch.nn.functional.normalize(torch.randn(3, 256), dim=1)
        zero, drawn = unpaired_anechoic_cycle(self.zero_f, self.zero_g, pool, CLEAN, self.s, self.generator)
        oracle, _ = unpaired_anechoic_cycle(self.oracle_f, self.oracle_g, pool, CLEAN, self.s, self.generator)
        self.assertAlmostEqual(float(zero), float(CLEAN.abs().mean()), places=6)
        self.assertTensorsClose(oracle, [0.0], atol=1e-6)
        self.assertTrue(0 <= int(drawn) < 3)

    def test_anechoic_cycle_resamples_scenes(self):
        pool = torch.nn.functional.normalize(torch.randn(4, 256), dim=1)
        drawn = set()
        for _ in range(100):
            _, index = unpaired_anechoic_cycle(self.zero_f, self.zero_g, pool, CLEAN, self.s, self.generator)
            drawn.add(int(index))
        self.assertGreaterEqual(len(drawn), 2)

    def test_anechoic_cycle_ignores_the_scene_without_cross_attention(self):
        model_f = ControllableUnet(UnetConfig(base=4, resolution=16, ladder=(4, 2, 2))).double()
        model_g = ControllableUnet(UnetConfig(base=4, resolution=16, ladder=(4, 2, 2))).double()
        for model in (model_f, model_g):
            torch.nn.init.normal_(model.out_conv.weight, std=0.1)
            model.zero_cross_attention()
        clean = (torch.rand(1, 1, 16, 16, dtype=torch.float64) - 0.5).expand(2, 1, 16, 16)
        pool = torch.nn.functional.normalize(torch.randn(2, 256, dtype=torch.float64), dim=1)

        first, _ = unpaired_anechoic_cycle(model_f, model_g, pool[:1], clean, self.s, torch.Generator().manual_seed(4))
        second, _ = unpaired_anechoic_cycle(model_f, model_g, pool[1:], clean, self.s, torch.Generator().manual_seed(4))
        self.assertTensorsClose(first, second, atol=1e-12)

    @parameterized.expand([[None], [torch.zeros(0, 256)]])
    def test_anechoic_cycle_needs_scenes(self, pool):
        with self.assertRaises(CycleError):
            unpaired_anechoic_cycle(self.zero_f, self.zero_g, pool, CLEAN, self.s, self.generator)

    def test_cycle_gradients_reach_both_converters(self):
        # small betas keep the x0 estimates inside the clamp
        mild = make_schedule(20, 1e-4, 0.02)
        config = UnetConfig(base=4, resolution=16, ladder=(4, 2, 2))
        f, g = ControllableUnet(config), ControllableUnet(config)
        for model in (f, g):
            torch.nn.init.normal_(model.out_conv.weight, std=0.1)
        a_c = torch.rand(2, 1, 16, 16) - 0.5
        a_r = torch.rand(2, 1, 16, 16) - 0.5
        emb = torch.nn.functional.normalize(torch.randn(2, 256), dim=1)
        delta_c, _ = paired_cycle_losses(f, g, emb, a_c, a_r, mild, self.generator)
        delta_c.mean().backward()
        self.assertGreater(float(f.out_conv.weight.grad.norm()), 0.0)
        self.assertGreater(float(g.out_conv.weight.grad.norm()), 0.0)


class LossArithmeticTests(MvsdTestClient):
    def test_mutual_loss_of_single_items(self):
        paired = (torch.tensor([0.2]), torch.tensor([0.3]))
        total = mutual_loss(paired, torch.tensor([0.1]), torch.tensor([0.4]))
        self.assertAlmostEqual(float(total), 1.0, places=6)

    def test_absent_collections_add_nothing(self):
        paired = (torch.tensor([0.2, 0.4]), torch.tensor([0.1, 0.3]))
        self.assertAlmostEqual(float(mutual_loss(paired)), 0.5, places=6)
        self.assertEqual(float(mutual_loss()), 0.0)

    def test_all_zero(self):
        zero = torch.zeros(3)
        self.assertEqual(float(mutual_loss((zero, zero), zero, zero)), 0.0)

    def test_style_loss(self):
        a_r = torch.tensor([[0.1, 0.2], [0.3, 0.4]])
        a_c = torch.tensor([[-0.1, 0.0], [0.5, -0.5]])
        self.assertEqual(float(style_loss(a_r, a_r, a_c, a_c)), 0.0)
        self.assertAlmostEqual(float(style_loss(a_r + 0.5, a_r, a_c, a_c)), 0.5, places=6)
        a_r_hat = torch.tensor([[0.0, 0.2], [0.5, 0.4]])
        a_c_hat = torch.tensor([[-0.1, 0.4], [0.5, -0.5]])
        self.assertAlmostEqual(float(style_loss(a_r_hat, a_r, a_c_hat, a_c)), 0.3 / 4 + 0.4 / 4, places=6)

    def test_mean_l1_is_per_item(self):
        a = torch.zeros(3, 1, 2, 2)
        b = torch.arange(3, dtype=torch.float32)[:, None, None, None].expand(3, 1, 2, 2)
        self.assertTensorsClose(mean_l1(a, b), [0.0, 1.0, 2.0], atol=0)

    def test_breakdown_identity(self):
        paired = (torch.tensor([0.2, 0.1]), torch.tensor([0.3, 0.5]))
        row = breakdown(torch.tensor(2.0), torch.tensor(0.55), torch.tensor(0.25), paired, None, torch.tensor([0.4]))
        self.assertAlmostEqual(row.l_total, row.l_d + row.l_m + row.l_sty, places=9)
        self.assertAlmostEqual(row.delta_c, 0.15, places=6)
        self.assertAlmostEqual(row.delta_r, 0.4, places=6)
        self.assertEqual(row.delta_nat, 0.0)
        self.assertAlmostEqual(row.delta_ane, 0.4, places=6)
