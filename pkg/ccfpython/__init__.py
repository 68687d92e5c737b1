from . import exceptions, utils, hashing, table, sketch, ccf, analysis, workload, experiments, cli
