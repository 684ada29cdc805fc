from rest_framework import serializers

from mvsd.constants import DATASET_VERSION, DRR_RANGE, ROOM_VOLUME_RANGE, RT60_RANGE
from mvsd.enums import OptimizerEnum, PredictorEnum, SplitEnum, TaskEnum
from mvsd.libraries.ablation import AblationConfig
from mvsd.libraries.contrastive import PretrainConfig
from mvsd.libraries.dataset import DatasetConfig
from mvsd.libraries.diffusion import default_betas
from mvsd.libraries.evaluation import MAX_SAMPLING_RUNS, EvalConfig
from mvsd.libraries.trainer import TrainConfig


def error_lines(errors, prefix=""):
    """Flatten DRF errors to one "key: message" line per problem."""
    if isinstance(errors, dict):
        lines = []
        for key, value in errors.items():
            name = key if key != "non_field_errors" else ""
            lines += error_lines(value, f"{prefix}.{name}" if prefix and name else (name or prefix))
        return lines
    if isinstance(errors, list):
        lines = []
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                lines += error_lines(value, f"{prefix}[{index}]")
            else:
                lines.append(f"{prefix}: {value}" if prefix else str(value))
        return lines
    return [f"{prefix}: {errors}" if prefix else str(errors)]


class IntegerListField(serializers.Field):
    """Accepts "4,4,2" from config files as well as a list of integers."""

    default_error_messages = {
        "invalid": "Expected comma separated integers.",
        "length": "Expected exactly {length} values.",
        "min_value": "Every value must be at least {min_value}.",
    }

    def __init__(self, length=None, min_value=None, **kwargs):
        self.length = length
        self.min_value = min_value
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [part for part in data.replace(" ", "").split(",") if part]
        try:
            values = tuple(int(value) for value in data)
        except (TypeError, ValueError):
            self.fail("invalid")
        if self.length is not None and len(values) != self.length:
            self.fail("length", length=self.length)
        if self.min_value is not None and any(value < self.min_value for value in values):
            self.fail("min_value", min_value=self.min_value)
        return values

    def to_representation(self, value):
        return list(value)


class SceneParamsSerializer(serializers.Serializer):
    rt60 = serializers.FloatField(min_value=RT60_RANGE[0], max_value=RT60_RANGE[1])
    drr = serializers.FloatField(min_value=DRR_RANGE[0], max_value=DRR_RANGE[1])
    room_volume = serializers.FloatField(min_value=ROOM_VOLUME_RANGE[0], max_value=ROOM_VOLUME_RANGE[1])
    seed = serializers.IntegerField(min_value=0)


class PairedItemSerializer(serializers.Serializer):
    scene_id = serializers.CharField()
    clean_id = serializers.CharField()
    reverb_id = serializers.CharField()
    split = serializers.ChoiceField(choices=SplitEnum.choices)
    params = SceneParamsSerializer()


class NaturalItemSerializer(serializers.Serializer):
    scene_id = serializers.CharField()
    reverb_id = serializers.CharField()
    split = serializers.ChoiceField(choices=SplitEnum.choices)
    params = SceneParamsSerializer()


class AnechoicItemSerializer(serializers.Serializer):
    clean_id = serializers.CharField()
    split = serializers.ChoiceField(choices=SplitEnum.choices)


class ManifestSerializer(serializers.Serializer):
    version = serializers.IntegerField()
    seed = serializers.IntegerField(min_value=0)
    splits = serializers.DictField(child=serializers.ListField(child=serializers.CharField()))
    paired = PairedItemSerializer(many=True)
    unpaired_natural = NaturalItemSerializer(many=True)
    unpaired_anechoic = AnechoicItemSerializer(many=True)

    def validate_version(self, value):
        if value != DATASET_VERSION:
            raise serializers.ValidationError(f"dataset version {value} is not supported, expected {DATASET_VERSION}")
        return value

    def validate_splits(self, value):
        unknown = sorted(set(value) - set(SplitEnum.as_list()))
        if unknown:
            raise serializers.ValidationError(f"unknown splits: {', '.join(unknown)}")
        return value


class DatasetConfigSerializer(serializers.Serializer):
    n_paired = serializers.IntegerField(min_value=0, required=False)
    m_natural = serializers.IntegerField(min_value=0, required=False)
    k_anechoic = serializers.IntegerField(min_value=0, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    duration = serializers.FloatField(min_value=1.0, required=False)
    workers = serializers.IntegerField(min_value=1, required=False)

    def create(self, validated_data):
        return DatasetConfig(**validated_data)

    def validate(self, attrs):
        config = DatasetConfig(**attrs)
        if config.n_paired + config.m_natural + config.k_anechoic == 0:
            raise serializers.ValidationError("at least one item must be requested")
        return attrs


class PretrainConfigSerializer(serializers.Serializer):
    epochs = serializers.IntegerField(min_value=1, required=False)
    temperature = serializers.FloatField(min_value=1e-6, required=False)
    batch_size = serializers.IntegerField(min_value=4, required=False)
    learning_rate = serializers.FloatField(min_value=1e-12, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    classes = serializers.IntegerField(min_value=2, required=False)

    def create(self, validated_data):
        return PretrainConfig(**validated_data)


def _check_warmup(attrs, config):
    if config.unpaired_warmup is not None and config.unpaired_warmup >= config.epochs:
        raise serializers.ValidationError(
            {"unpaired_warmup": f"must be smaller than epochs ({config.epochs}), got {config.unpaired_warmup}"}
        )
    return attrs


def _check_beta(value):
    if value is not None and not 0 < value < 1:
        raise serializers.ValidationError(f"must lie strictly between 0 and 1, got {value}")
    return value


class TrainConfigSerializer(serializers.Serializer):
    learning_rate = serializers.FloatField(required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    epochs = serializers.IntegerField(min_value=1, required=False)
    unpaired_warmup = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    diffusion_steps = serializers.IntegerField(min_value=1, required=False)
    beta_start = serializers.FloatField(required=False, allow_null=True)
    beta_end = serializers.FloatField(required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, required=False)
    base_channels = serializers.IntegerField(min_value=1, required=False)
    ladder = IntegerListField(length=3, min_value=1, required=False)
    optimizer = serializers.ChoiceField(choices=OptimizerEnum.choices, required=False)
    use_mutual = serializers.BooleanField(required=False)
    use_unpaired = serializers.BooleanField(required=False)
    use_style = serializers.BooleanField(required=False)
    unpaired_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, required=False, allow_null=True)
    cycle_steps = serializers.IntegerField(min_value=1, required=False)

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("learning rate must be positive")
        return value

    def validate_beta_start(self, value):
        return _check_beta(value)

    def validate_beta_end(self, value):
        return _check_beta(value)

    def validate(self, attrs):
        config = TrainConfig(**attrs)
        default_start, default_end = default_betas(config.diffusion_steps)
        start = default_start if config.beta_start is None else config.beta_start
        end = default_end if config.beta_end is None else config.beta_end
        if start > end:
            raise serializers.ValidationError({"beta_end": f"must be at least beta_start ({start}), got {end}"})
        return _check_warmup(attrs, config)

    def create(self, validated_data):
        return TrainConfig(**validated_data)


class EvalConfigSerializer(serializers.Serializer):
    checkpoint = serializers.CharField(required=False, allow_null=True)
    manifest = serializers.CharField()
    split = serializers.ChoiceField(choices=SplitEnum.choices, required=False)
    n_sampling_runs = serializers.IntegerField(min_value=1, max_value=MAX_SAMPLING_RUNS, required=False)
    steps = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, required=False)
    griffin_lim_iterations = serializers.IntegerField(min_value=1, required=False)
    predictor = serializers.ChoiceField(choices=PredictorEnum.choices, required=False)
    task = serializers.ChoiceField(choices=TaskEnum.choices, required=False)
    workers = serializers.IntegerField(min_value=1, required=False)

    def validate(self, attrs):
        config = EvalConfig(**attrs)
        if config.predictor == PredictorEnum.MODEL and not config.checkpoint:
            raise serializers.ValidationError({"checkpoint": "required when evaluating the model predictor"})
        if config.task == TaskEnum.SWAP and config.predictor != PredictorEnum.MODEL:
            raise serializers.ValidationError({"predictor": "the swap task only runs with the model predictor"})
        return attrs

    def create(self, validated_data):
        return EvalConfig(**validated_data)


class InferSerializer(serializers.Serializer):
    task = serializers.ChoiceField(choices=TaskEnum.inference_choices)
    audio = serializers.CharField()
    scene = serializers.CharField()
    checkpoint = serializers.CharField()
    steps = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, required=False)
    griffin_lim_iterations = serializers.IntegerField(min_value=1, required=False)

    def create(self, validated_data):
        return dict(validated_data)


class AblationConfigSerializer(serializers.Serializer):
    seeds = IntegerListField(min_value=0, required=False)
    epochs = serializers.IntegerField(min_value=1, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(min_value=1e-12, required=False)
    base_channels = serializers.IntegerField(min_value=1, required=False)
    ladder = IntegerListField(length=3, min_value=1, required=False)
    unpaired_warmup = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    cycle_steps = serializers.IntegerField(min_value=1, required=False)
    n_sampling_runs = serializers.IntegerField(min_value=1, max_value=MAX_SAMPLING_RUNS, required=False)
    split = serializers.ChoiceField(choices=SplitEnum.choices, required=False)
    griffin_lim_iterations = serializers.IntegerField(min_value=1, required=False)

    def validate_seeds(self, value):
        if not value:
            raise serializers.ValidationError("at least one seed is needed")
        return value

    def validate(self, attrs):
        return _check_warmup(attrs, AblationConfig(**attrs))

    def create(self, validated_data):
        return AblationConfig(**validated_data)


CONFIG_SERIALIZERS = [
    DatasetConfigSerializer,
    PretrainConfigSerializer,
    TrainConfigSerializer,
    EvalConfigSerializer,
    InferSerializer,
    AblationConfigSerializer,
]


def known_config_keys():
    keys = set()
    for serializer_class in CONFIG_SERIALIZERS:
        keys.update(serializer_class().fields)
    return keys
