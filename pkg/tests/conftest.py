import os

# tiny-tensor workloads: threaded BLAS only adds contention, and a fixed
# thread count keeps reductions bit-reproducible
for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

# pytest plugins can import numpy before this file runs, in which case the
# env vars above are too late; clamp the already-created pools as well
try:
    from threadpoolctl import threadpool_limits

    _BLAS_LIMIT = threadpool_limits(limits=1)
except ImportError:
    pass
