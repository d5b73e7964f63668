"""Raster images of samples: occupied sets in black on a white disk, an
optional red interface extracted by flood fill from a boundary arc.

Images are written through PIL from a pixel array, so a fixed sample yields
byte-identical files (no timestamps or variable metadata).
"""
import numpy as np
from PIL import Image
from scipy import ndimage

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
GRAY = (150, 150, 150)
RED = (220, 30, 30)
BLUE = (60, 90, 200)

FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def _grid_image(lat, occupied):
    side = lat.grid.shape[0]
    img = np.zeros((side, side), dtype=bool)
    img[lat.coords[:, 0] + lat.n, lat.coords[:, 1] + lat.n] = occupied
    return img


def interface_pixels(lat, occupied, arc="lower"):
    """Boundary of the filled occupied set relative to a boundary arc.

    The arc's complement side is flood filled through vacant cells from the
    off-disk border; unreached vacant cells count as filled.  The interface
    is the set of filled cells adjacent to reached vacant cells.
    """
    side = lat.grid.shape[0]
    occ = _grid_image(lat, occupied)
    in_disk = lat.grid >= 0
    vac = in_disk & ~occ
    seed = np.zeros((side, side), dtype=bool)
    iy, ix = np.nonzero(~in_disk)
    if arc == "lower":
        keep = (ix - lat.n) > 0
    elif arc == "upper":
        keep = (ix - lat.n) < 0
    else:
        keep = np.ones(iy.shape, dtype=bool)
    seed[iy[keep], ix[keep]] = True
    labels, _ = ndimage.label(vac | ~in_disk, structure=FOUR)
    reached_labels = np.unique(labels[seed & (labels > 0)])
    reached = np.isin(labels, reached_labels) & vac
    filled = in_disk & ~reached
    dil = ndimage.binary_dilation(reached, structure=FOUR)
    return filled & dil


def render_occupied(lat, occupied, path, scale=None, interface_arc=None,
                    highlight=None):
    """Write a PNG: occupied vertices black, optional interface in red,
    optional extra vertex set in blue; disk outline in gray."""
    side = lat.grid.shape[0]
    if scale is None:
        scale = max(1, 512 // side)
    img = np.full((side, side, 3), 255, dtype=np.uint8)
    in_disk = lat.grid >= 0
    img[~in_disk] = GRAY
    occ = _grid_image(lat, occupied)
    img[occ] = BLACK
    if highlight is not None:
        img[_grid_image(lat, highlight)] = BLUE
    if interface_arc is not None:
        img[interface_pixels(lat, occupied, interface_arc)] = RED
    big = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    big = np.transpose(big, (1, 0, 2))[::-1]   # x right, y up
    Image.fromarray(big, mode="RGB").save(path, format="PNG")
    return path


def render_field(lat, phi, h, path, scale=None):
    """Level-set image: {phi >= h} black, rest white."""
    return render_occupied(lat, np.asarray(phi) >= h, path, scale=scale)
