from flow.conversions import (
    downsample_gt,
    flow_to_map,
    identity_grid,
    map_to_flow,
    rescale_flow_frame,
    upsample_flow,
)
from flow.fields import CorrespondenceMap, FlowField
from flow.warp import sample_bilinear, sample_bilinear_points, warp
