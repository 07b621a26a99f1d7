from storage.checkpoint import read_checkpoint, write_checkpoint
from storage.flow_file import read_flo, write_flo
from storage.images import crop_to, pad_to_multiple, read_image, read_mask, resize_image, write_image, write_mask
