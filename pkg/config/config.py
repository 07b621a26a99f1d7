import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Worker configuration
DCE_THREADS = int(os.getenv("DCE_THREADS", "0")) or (os.cpu_count() or 1)

# Numeric defaults
DEFAULT_DTYPE = "float32"
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
L2_EPS = 1e-6
EPE_EPS = 1e-8  # smoothing inside sqrt(u^2 + v^2 + eps)

# Image normalisation (ImageNet statistics, RGB order)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Logging configuration
LOG_DIRECTORY = os.getenv("DCE_LOG_DIR", "logs")
RUN_LOG_FILE = os.path.join(LOG_DIRECTORY, "training_runs.log")
CHECKPOINT_LOG_FILE = os.path.join(LOG_DIRECTORY, "checkpoints.log")
LOG_LEVEL = os.getenv("DCE_LOG_LEVEL", "INFO")

# File formats
CHECKPOINT_MAGIC = b"DCE1"
CHECKPOINT_VERSION = 1
FLOW_FILE_MAGIC = 202021.25
MANIFEST_FILE = "manifest.txt"
LOSS_HISTORY_FILE = "loss_history.csv"

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Model geometry
MODEL_DIVISOR = 8  # H and W must be multiples of this
LNET_DIVISOR = 16  # H_L and W_L must be multiples of this
