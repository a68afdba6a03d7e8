"""
Optional MPI layer. Without ``mpi4py`` every helper behaves as a single-rank world.
"""

try:
    import mpi4py.MPI

    _comm = mpi4py.MPI.COMM_WORLD
    # When mocked this TypeErrors
    parallel_run = _comm.Get_size() > 1
except (ImportError, TypeError):
    _comm = None
    main_node = True
    parallel_run = False
else:
    main_node = not _comm.Get_rank()


def barrier():
    if _comm:
        _comm.barrier()


def share(items):
    """
    This rank's round-robin share of ``items``.
    """
    if not _comm:
        return list(items)
    return list(items)[_comm.Get_rank() :: _comm.Get_size()]


def gather_all(part):
    """
    Concatenate every rank's ``part`` on all ranks, in rank order.
    """
    if not _comm:
        return list(part)
    return [item for rank_part in _comm.allgather(list(part)) for item in rank_part]
