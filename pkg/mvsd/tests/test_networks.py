import torch
from parameterized import parameterized

from mvsd.enums import ConverterRoleEnum
from mvsd.libraries.acoustics import SceneParams
from mvsd.libraries.networks import (
    ArchitectureError,
    ControllableUnet,
    ConverterModel,
    CrossAttention2d,
    SceneEncoder,
    UnetConfig,
    encode_scene,
    gradients,
    parameter_report,
    sinusoidal_embedding,
)
from mvsd.libraries.scenes import render_scene
from mvsd.tests.libraries.client import MvsdTestClient
from mvsd.tests.libraries.fixtures import tiny_encoder

MINIATURE = UnetConfig(base=4, resolution=16, ladder=(4, 2, 2))
SMALL = UnetConfig(base=4, resolution=32, ladder=(4, 2, 2))


def inputs(config, batch=2, dtype=torch.float32):
    size = config.resolution
    x_t = torch.randn(batch, 1, size, size, dtype=dtype)
    source = torch.rand(batch, 1, size, size, dtype=dtype) * 2 - 1
    t = torch.randint(1, 50, (batch,))
    emb = torch.nn.functional.normalize(torch.randn(batch, config.context_dim, dtype=dtype), dim=1)
    return x_t, source, t, emb


class UnetTests(MvsdTestClient):
    def test_fresh_model_predicts_zero(self):
        model = ControllableUnet(SMALL)
        out = model(*inputs(SMALL))
        self.assertEqual(tuple(out.shape), (2, 1, 32, 32))
        self.assertEqual(float(out.abs().max()), 0.0)

    def test_default_geometry(self):
        model = ControllableUnet(UnetConfig(base=4))
        x_t, source, t, emb = inputs(UnetConfig(base=4), batch=1)
        self.assertEqual(tuple(model(x_t, source, t, emb).shape), (1, 1, 128, 128))

    @parameterized.expand([[UnetConfig(resolution=100)], [UnetConfig(ladder=(4, 4))], [UnetConfig(base=0)]])
    def test_invalid_configs(self, config):
        with self.assertRaises(ArchitectureError):
            ControllableUnet(config)

    def test_mismatched_inputs(self):
        model = ControllableUnet(SMALL)
        x_t, source, t, emb = inputs(SMALL)
        with self.assertRaises(ArchitectureError):
            model(x_t, source[:, :, :16, :16], t, emb)

    def test_cross_attention_placement(self):
        model = ControllableUnet(SMALL)
        self.assertEqual(len(model.cross_attention_modules()), 2)
        self.assertIsInstance(model.encoder[2].cross, CrossAttention2d)
        self.assertIsInstance(model.decoder[0].cross, CrossAttention2d)
        self.assertIsNone(model.encoder[0].cross)
        self.assertIsNone(model.decoder[2].cross)

    def test_deterministic_forward(self):
        model = ControllableUnet(SMALL)
        torch.nn.init.normal_(model.out_conv.weight, std=0.1)
        args = inputs(SMALL)
        self.assertTensorsClose(model(*args), model(*args), atol=0)

    def test_time_embedding(self):
        embedding = sinusoidal_embedding(torch.tensor([0, 5]), 8)
        self.assertEqual(tuple(embedding.shape), (2, 8))
        self.assertTensorsClose(embedding[0], [0, 0, 0, 0, 1, 1, 1, 1], atol=0)
        self.assertEqual(tuple(sinusoidal_embedding(torch.tensor([1]), 7).shape), (1, 7))

    def test_conditioning_sensitivity(self):
        model = ControllableUnet(SMALL)
        x_t, source, t, emb = inputs(SMALL, batch=1)
        optimizer = torch.optim.SGD(model.parameters(), lr=0.1)
        loss = torch.nn.functional.mse_loss(model(x_t, source, t, emb), torch.randn_like(x_t))
        loss.backward()
        optimizer.step()

        orthogonal = torch.zeros_like(emb)
        orthogonal[0, int(emb[0].abs().argmin())] = 1.0
        orthogonal = orthogonal - (orthogonal @ emb.T) * emb
        orthogonal = torch.nn.functional.normalize(orthogonal, dim=1)
        with torch.no_grad():
            self.assertGreater(float((model(x_t, source, t, emb) - model(x_t, source, t, orthogonal)).abs().max()), 0)
            model.zero_cross_attention()
            self.assertTensorsClose(model(x_t, source, t, emb), model(x_t, source, t, orthogonal), atol=0)

    def test_every_parameter_gets_a_gradient(self):
        model = ControllableUnet(SMALL)
        torch.nn.init.normal_(model.out_conv.weight, std=0.1)
        x_t, source, t, emb = inputs(SMALL)
        grads = gradients(model, (model(x_t, source, t, emb) ** 2).mean())
        dead = [name for name, grad in grads.items() if float(grad.abs().max()) == 0.0]
        self.assertEqual(dead, [])

    def test_parameter_report(self):
        first = parameter_report(ControllableUnet(SMALL))
        second = parameter_report(ControllableUnet(SMALL))
        self.assertEqual(first, second)
        self.assertEqual(first["total"], sum(p.numel() for p in ControllableUnet(SMALL).parameters()))
        wider = parameter_report(ControllableUnet(UnetConfig(base=8, resolution=32)))
        self.assertGreater(wider["total"], first["total"])


class GradientTests(MvsdTestClient):
    def test_central_differences(self):
        model = ControllableUnet(MINIATURE).double()
        torch.nn.init.normal_(model.out_conv.weight, std=0.3)
        x_t, source, t, emb = inputs(MINIATURE, batch=1, dtype=torch.float64)
        weights = torch.randn(1, 1, 16, 16, dtype=torch.float64)

        def loss():
            return (model(x_t, source, t, emb) * weights).sum()

        analytic = gradients(model, loss())
        epsilon = 1e-5
        generator = torch.Generator().manual_seed(0)
        with torch.no_grad():
            for name, parameter in model.named_parameters():
                flat = parameter.view(-1)
                picks = torch.randperm(flat.numel(), generator=generator)[:3].tolist()
                for index in picks:
                    original = float(flat[index])
                    flat[index] = original + epsilon
                    upper = float(loss())
                    flat[index] = original - epsilon
                    lower = float(loss())
                    flat[index] = original
                    numeric = (upper - lower) / (2 * epsilon)
                    exact = float(analytic[name].view(-1)[index])
                    tolerance = 1e-4 * max(abs(exact), abs(numeric)) + 1e-8
                    self.assertLessEqual(abs(exact - numeric), tolerance, f"{name}[{index}]")

            for name, parameter in model.named_parameters():
                direction = torch.randn(parameter.shape, generator=generator, dtype=torch.float64)
                direction /= direction.norm()
                original = parameter.clone()
                parameter.copy_(original + epsilon * direction)
                upper = float(loss())
                parameter.copy_(original - epsilon * direction)
                lower = float(loss())
                parameter.copy_(original)
                numeric = (upper - lower) / (2 * epsilon)
                exact = float((analytic[name] * direction).sum())
                tolerance = 1e-4 * max(abs(exact), abs(numeric)) + 1e-8
                self.assertLessEqual(abs(exact - numeric), tolerance, f"{name} along a random direction")

    def test_constant_loss(self):
        model = ControllableUnet(MINIATURE)
        grads = gradients(model, torch.tensor(3.0))
        self.assertTrue(all(float(grad.abs().max()) == 0.0 for grad in grads.values()))

    def test_unused_parameters_get_zeros(self):
        model = ControllableUnet(MINIATURE)
        grads = gradients(model, model.out_conv.bias.sum() * 2)
        self.assertTensorsClose(grads["out_conv.bias"], [2.0], atol=0)
        self.assertEqual(float(grads["stem.weight"].abs().max()), 0.0)

    def test_frozen_encoder_is_left_out(self):
        converter = ConverterModel(ConverterRoleEnum.REVERBERATOR, MINIATURE, tiny_encoder())
        x_t, source, t, emb = inputs(MINIATURE)
        grads = gradients(converter, converter(x_t, source, t, emb).sum())
        self.assertTrue(grads)
        self.assertFalse([name for name in grads if name.startswith("encoder.")])
        self.assertTrue(all(not p.requires_grad for p in converter.encoder.parameters()))

    def test_converter_keeps_the_encoder_in_eval_mode(self):
        converter = ConverterModel(ConverterRoleEnum.DEREVERBERATOR, MINIATURE, tiny_encoder())
        converter.train()
        self.assertTrue(converter.unet.training)
        self.assertFalse(converter.encoder.training)

    def test_unknown_role(self):
        with self.assertRaises(ArchitectureError):
            ConverterModel("mixer", MINIATURE, tiny_encoder())


class SceneEncoderTests(MvsdTestClient):
    def test_embeddings_are_unit_vectors(self):
        encoder = tiny_encoder()
        embeddings = encoder(torch.rand(5, 3, 64, 64))
        self.assertEqual(tuple(embeddings.shape), (5, 256))
        self.assertTensorsClose(embeddings.norm(dim=1), torch.ones(5), atol=1e-5)

    def test_encode_scene_is_deterministic(self):
        encoder = tiny_encoder()
        image = render_scene(SceneParams(0.4, 3.0, 90.0, 2))
        first = encode_scene(encoder, image)
        self.assertTensorsClose(first, encode_scene(encoder, image), atol=0)
        self.assertTensorsClose(first, encode_scene(encoder, image.pixels), atol=0)
        self.assertAlmostEqual(float(first.norm()), 1.0, delta=1e-5)

    def test_wrong_image_shape(self):
        with self.assertRaises(ArchitectureError):
            encode_scene(tiny_encoder(), torch.zeros(32, 32, 3, dtype=torch.uint8).numpy())
        with self.assertRaises(ArchitectureError):
            SceneEncoder()(torch.zeros(1, 1, 64, 64))
