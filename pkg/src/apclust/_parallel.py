"""Row-tiled map over a thread pool.

Tile boundaries depend only on the row count, never on the worker count,
and results come back in tile order. Any reduction a caller performs over
them is therefore identical for 1 or many workers.
"""

from concurrent.futures import ThreadPoolExecutor

from .patterns import ROW_TILE


def row_tiles(n_rows, tile=ROW_TILE):
    return [slice(s, min(s + tile, n_rows)) for s in range(0, n_rows, tile)]


def map_tiles(fn, n_rows, n_workers=1, tile=ROW_TILE):
    tiles = row_tiles(n_rows, tile)
    if n_workers <= 1 or len(tiles) <= 1:
        return [fn(t) for t in tiles]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, tiles))
