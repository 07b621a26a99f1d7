from correlation.volumes import global_correlation, local_correlation
from correlation.filters import cyclic_consistency_filter, normalize_cost_volume
from correlation.cost import global_correlation_cost, local_correlation_cost
