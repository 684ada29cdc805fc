import os

from parameterized import parameterized

from mvsd.enums import OptimizerEnum, PredictorEnum, TaskEnum
from mvsd.libraries.dataset import DatasetConfig
from mvsd.libraries.run_config import RunConfigError, check_keys, read_run_config, resolve
from mvsd.libraries.trainer import TrainConfig
from mvsd.serializers import (
    DatasetConfigSerializer,
    EvalConfigSerializer,
    ManifestSerializer,
    TrainConfigSerializer,
    error_lines,
    known_config_keys,
)
from mvsd.tests.libraries.client import MvsdTestClient


class ErrorLinesTests(MvsdTestClient):
    def test_flattening(self):
        errors = {
            "epochs": ["Ensure this value is greater than or equal to 1."],
            "paired": [{}, {"split": ["bad split"]}],
            "non_field_errors": ["nothing requested"],
        }
        self.assertEqual(
            error_lines(errors),
            [
                "epochs: Ensure this value is greater than or equal to 1.",
                "paired[1].split: bad split",
                "nothing requested",
            ],
        )

    def test_plain_values(self):
        self.assertEqual(error_lines("broken"), ["broken"])
        self.assertEqual(error_lines({"a": {"b": ["x", "y"]}}), ["a.b: x", "a.b: y"])


class TrainConfigSerializerTests(MvsdTestClient):
    def test_defaults(self):
        serializer = TrainConfigSerializer(data={})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), TrainConfig())

    def test_strings_from_config_files(self):
        data = {"learning_rate": "0.001", "epochs": "4", "ladder": "4, 2,2", "use_mutual": "false", "optimizer": "sgd"}
        serializer = TrainConfigSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        config = serializer.save()
        self.assertEqual(config.learning_rate, 0.001)
        self.assertEqual(config.epochs, 4)
        self.assertEqual(config.ladder, (4, 2, 2))
        self.assertFalse(config.use_mutual)
        self.assertEqual(config.optimizer, OptimizerEnum.SGD)

    @parameterized.expand(
        [
            [{"ladder": "4,x,2"}, "ladder"],
            [{"ladder": "4,4"}, "ladder"],
            [{"ladder": "0,1,1"}, "ladder"],
            [{"learning_rate": "0"}, "learning_rate"],
            [{"epochs": "0"}, "epochs"],
            [{"optimizer": "rmsprop"}, "optimizer"],
            [{"epochs": "4", "unpaired_warmup": "4"}, "unpaired_warmup"],
            [{"beta_start": "0"}, "beta_start"],
            [{"beta_start": "-0.1"}, "beta_start"],
            [{"beta_end": "1"}, "beta_end"],
            [{"beta_start": "0.02", "beta_end": "0.01"}, "beta_end"],
            [{"diffusion_steps": "1000", "beta_start": "0.05"}, "beta_end"],
        ]
    )
    def test_invalid_values(self, data, field):
        serializer = TrainConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn(field, serializer.errors)


class OtherSerializerTests(MvsdTestClient):
    def test_dataset_config(self):
        serializer = DatasetConfigSerializer(data={"n_paired": "10", "seed": "4"})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), DatasetConfig(n_paired=10, seed=4))

    def test_empty_dataset(self):
        serializer = DatasetConfigSerializer(data={"n_paired": 0, "m_natural": 0, "k_anechoic": 0})
        self.assertFalse(serializer.is_valid())
        self.assertEqual(error_lines(serializer.errors), ["at least one item must be requested"])

    @parameterized.expand(
        [
            [{"manifest": "data"}, "checkpoint"],
            [{"manifest": "data", "task": TaskEnum.SWAP, "predictor": PredictorEnum.ZERO}, "predictor"],
            [{"manifest": "data", "predictor": PredictorEnum.ORACLE, "n_sampling_runs": 11}, "n_sampling_runs"],
            [{"predictor": PredictorEnum.ORACLE}, "manifest"],
        ]
    )
    def test_eval_config_errors(self, data, field):
        serializer = EvalConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn(field, serializer.errors)

    def test_manifest_version(self):
        payload = {"version": 2, "seed": 0, "splits": {}, "paired": [], "unpaired_natural": [], "unpaired_anechoic": []}
        serializer = ManifestSerializer(data=payload)
        self.assertFalse(serializer.is_valid())
        self.assertIn("version", serializer.errors)

    def test_manifest_splits(self):
        payload = {
            "version": 1,
            "seed": 0,
            "splits": {"holdout": ["scene_p00000"]},
            "paired": [],
            "unpaired_natural": [],
            "unpaired_anechoic": [],
        }
        serializer = ManifestSerializer(data=payload)
        self.assertFalse(serializer.is_valid())
        self.assertIn("splits", serializer.errors)

    def test_known_config_keys(self):
        keys = known_config_keys()
        for key in ("n_paired", "learning_rate", "checkpoint", "temperature", "seeds", "griffin_lim_iterations"):
            self.assertIn(key, keys)
        self.assertNotIn("bogus", keys)


class RunConfigTests(MvsdTestClient):
    def write(self, text):
        path = os.path.join(self.make_tempdir(), "run.env")
        with open(path, "w") as f:
            f.write(text)
        return path

    def test_read_run_config(self):
        path = self.write("# tiny run\nEPOCHS=3\nlearning_rate=0.001\nladder=4,2,2\n")
        self.assertEqual(read_run_config(path), {"epochs": "3", "learning_rate": "0.001", "ladder": "4,2,2"})
        self.assertNotIn("EPOCHS", os.environ)

    def test_missing_file(self):
        with self.assertRaises(RunConfigError) as context:
            read_run_config(os.path.join(self.make_tempdir(), "absent.env"))
        self.assertTrue(context.exception.problems[0].startswith("--config: no such file"))

    def test_unknown_keys(self):
        with self.assertRaises(RunConfigError) as context:
            check_keys({"zeta": "1", "epochs": "2", "alpha": "3"}, known_config_keys())
        self.assertEqual(
            context.exception.problems, ["alpha: unknown configuration key", "zeta: unknown configuration key"]
        )

    def test_flags_override_the_file(self):
        file_values = {"epochs": "3", "batch_size": "2", "checkpoint": "ignored.pt"}
        config = resolve(TrainConfigSerializer, file_values, {"epochs": "5", "batch_size": None, "seed": 9})
        self.assertEqual((config.epochs, config.batch_size, config.seed), (5, 2, 9))
        self.assertEqual(config.learning_rate, TrainConfig().learning_rate)

    def test_settings_sit_below_the_file(self):
        self.assertEqual(resolve(DatasetConfigSerializer, {}, {}, {"workers": 4}).workers, 4)
        self.assertEqual(resolve(DatasetConfigSerializer, {"workers": "3"}, {}, {"workers": 4}).workers, 3)
        self.assertEqual(resolve(DatasetConfigSerializer, {"workers": "3"}, {"workers": 2}, {"workers": 4}).workers, 2)

    def test_every_problem_is_reported(self):
        with self.assertRaises(RunConfigError) as context:
            resolve(TrainConfigSerializer, {"epochs": "0", "batch_size": "-1"})
        fields = sorted(problem.split(":")[0] for problem in context.exception.problems)
        self.assertEqual(fields, ["batch_size", "epochs"])
