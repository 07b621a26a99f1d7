from evaluation.metrics import aepe, eval_sparse, evaluate_dense, evaluate_dense_many, f1_all, pck, pck_relative
from evaluation.report import MetricReport, write_report
