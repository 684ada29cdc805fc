SAMPLE_RATE = 16000
FFT_SIZE = 1024
HOP_SIZE = 256
N_MELS = 128
SPEC_WIDTH = 128

# normalized log-mel range maps [-80 dB, 0 dB] onto [-1, 1]
DB_FLOOR = -80.0
MAG_FLOOR = 1e-4

GRIFFIN_LIM_ITERATIONS = 60
MEL_INVERT_ITERATIONS = 10

WAV_SUBTYPE = "PCM_16"
REVERB_PEAK = 0.95

RT60_RANGE = (0.1, 1.2)
DRR_RANGE = (-5.0, 15.0)
ROOM_VOLUME_RANGE = (20.0, 500.0)

# T20 regression window on the Schroeder curve, in dB
DECAY_FIT_RANGE = (-5.0, -25.0)

SCENE_SIZE = 64
SCENE_HUE_DEAD = 0.70
SCENE_HUE_LIVE = 0.05
SCENE_TEXTURE_JITTER = 12

SPEECH_DURATION = 2.0
SPEECH_TRAILING_SILENCE = 0.65
SPEECH_PEAK = 0.5

EMBEDDING_DIM = 256
RT60_CLASSES = 8

DIFFUSION_STEPS = 250
BETA_START = 1e-4
BETA_END = 0.02
BETA_CAP = 0.999

DATASET_VERSION = 1
CHECKPOINT_FORMAT = "mvsd-checkpoint"
CHECKPOINT_VERSION = 1

MANIFEST_FILENAME = "manifest.json"
SCENES_DIR = "scenes"
CLEAN_DIR = "clean"
REVERB_DIR = "reverb"

LOSS_LOG_FILENAME = "loss_log.csv"
VALIDATION_LOG_FILENAME = "validation.csv"
CHECKPOINTS_DIR = "checkpoints"
ENCODER_FILENAME = "encoder.pt"
