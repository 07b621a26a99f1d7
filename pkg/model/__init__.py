from model.backbone import BackboneSpec, ToyBackbone, extract_pyramid, normalize_image
from model.decoders import FlowDecoder, MappingDecoder, RefinementNetwork
from model.glunet import (
    GLUNetModel,
    GLUNetOutput,
    count_params,
    iterative_refinement_schedule,
    load_checkpoint,
    save_checkpoint,
)
from model.layers import Module
