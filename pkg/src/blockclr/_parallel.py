from concurrent.futures import ProcessPoolExecutor


def map_ordered(func, items, workers=1, chunksize=1):
    """``list(map(func, items))``, optionally spread over worker processes.

    Results come back in input order, so callers get identical output for
    any worker count as long as ``func`` is deterministic.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
