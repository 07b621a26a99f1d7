"""
Static tables for the network layout, the training schedule and the synthetic warps.
"""

# Decoder layouts (full scale)
MAPPING_DECODER_CHANNELS = [128, 128, 96, 64, 32]
FLOW_DECODER_CHANNELS = [128, 128, 96, 64, 32]
REFINEMENT_CHANNELS = [128, 128, 128, 96, 64, 32]
REFINEMENT_DILATIONS = [1, 2, 4, 8, 16, 1, 1]

# Transposed-convolution carry between L3 and L4
CARRY_KERNEL = 4
CARRY_STRIDE = 2
CARRY_PADDING = 1

# Pyramid
PYRAMID_LEVELS = ["L1", "L2", "L3", "L4"]
LOCAL_LEVELS = ["L2", "L3", "L4"]
REFINED_LEVELS = ["L2", "L4"]
DEFAULT_LOCAL_RADIUS = 4

# Toy backbone: stride-2 stages ending at /2, /4, /8 and /16
TOY_BACKBONE_CHANNELS = [16, 32, 64, 64]

# Desk-scale preset used by tests and the convergence check
DESK_SCALE = {
    "lnet_size": 64,
    "local_radius": {"L2": 2, "L3": 2, "L4": 2},
    "backbone_channels": [8, 16, 16, 16],
    "mapping_channels": [32, 32, 24, 16, 8],
    "decoder_channels": [32, 32, 24, 16, 8],
    "refinement_channels": [32, 32, 32, 24, 16, 8],
}

# Training schedule
LEVEL_WEIGHTS = [0.32, 0.08, 0.02, 0.01]
LEARNING_RATE = 1e-4
WEIGHT_DECAY = 4e-4
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
BATCH_SIZE = 16

# Synthetic transform ranges
TRANSFORM_RANGES = {
    "affine": {
        "rotation_deg": 15.0,
        "scale": [0.8, 1.2],
        "shear": 0.15,
        "translation": 0.10,
    },
    "homography": {
        "corner_perturbation": 0.125,
    },
    "tps": {
        "grid_size": 3,
        "jitter": 0.10,
        "regularization": 1e-6,
    },
}
TRANSFORM_KINDS = ["affine", "homography", "tps"]
MAX_TRANSFORM_RETRIES = 10
DEFAULT_CROP = 520

# Evaluation
PCK_THRESHOLDS = [1.0, 5.0]
PCK_RELATIVE_ALPHA = 0.05
F1_PIXEL_THRESHOLD = 3.0
F1_RELATIVE_THRESHOLD = 0.05

# Benchmark
BENCH_SIZES = [8, 16, 32]
BENCH_CHANNELS = 64
BENCH_REPEAT = 5
