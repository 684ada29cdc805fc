class ConverterRoleEnum:
    REVERBERATOR = "reverberator"
    DEREVERBERATOR = "dereverberator"

    choices = [
        (REVERBERATOR, "Reverberator (anechoic to reverberant)"),
        (DEREVERBERATOR, "Dereverberator (reverberant to anechoic)"),
    ]


class TaskEnum:
    VAM = "vam"
    DEREVERB = "dereverb"
    SWAP = "swap"

    choices = [
        (VAM, "Visual acoustic matching"),
        (DEREVERB, "Dereverberation"),
        (SWAP, "Scene swap conditioning check"),
    ]

    inference_choices = [VAM, DEREVERB]

    @classmethod
    def get_text(cls, status) -> str:
        for k, v in cls.choices:
            if status == k:
                return v


class SplitEnum:
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

    choices = [
        (TRAIN, "Train"),
        (VAL, "Validation"),
        (TEST, "Test"),
    ]

    # 80/10/10 by scene
    fractions = {TRAIN: 0.8, VAL: 0.1, TEST: 0.1}

    @classmethod
    def as_list(cls) -> list:
        return [choice[0] for choice in cls.choices]


class CollectionEnum:
    PAIRED = "paired"
    UNPAIRED_NATURAL = "unpaired_natural"
    UNPAIRED_ANECHOIC = "unpaired_anechoic"

    choices = [
        (PAIRED, "Paired scene, clean and reverberant audio"),
        (UNPAIRED_NATURAL, "Scene and reverberant audio without clean counterpart"),
        (UNPAIRED_ANECHOIC, "Clean audio without scene"),
    ]

    # id prefixes used for files on disk
    prefixes = {PAIRED: "p", UNPAIRED_NATURAL: "u", UNPAIRED_ANECHOIC: "c"}


class OptimizerEnum:
    ADAM = "adam"
    SGD = "sgd"

    choices = [
        (ADAM, "Adaptive moment estimation"),
        (SGD, "Plain gradient descent"),
    ]


class PredictorEnum:
    MODEL = "model"
    ORACLE = "oracle"
    ZERO = "zero"
    IDENTITY = "identity"

    choices = [
        (MODEL, "Trained converter"),
        (ORACLE, "Ground-truth spectrogram (vocoder floor)"),
        (ZERO, "Silent output"),
        (IDENTITY, "Unprocessed source spectrogram"),
    ]

    @classmethod
    def as_list(cls) -> list:
        return [choice[0] for choice in cls.choices]


class PlotKindEnum:
    LOSS = "loss"
    ABLATION = "ablation"
    SPECTROGRAM = "spectrogram"

    choices = [
        (LOSS, "Loss curves from a training log"),
        (ABLATION, "Ablation comparison bars"),
        (SPECTROGRAM, "Mel spectrogram of a WAV file"),
    ]
