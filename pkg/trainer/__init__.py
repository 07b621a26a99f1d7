from trainer.loss import endpoint_error, multi_scale_loss, prepare_level_targets
from trainer.train import assemble_batch, evaluate_model, train
