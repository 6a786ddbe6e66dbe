"""
Masks, morphology and compositing
=================================

The reference hair mask is grown and shrunk by a target fraction of its
area. The ring between the two is left unsupervised, and the final image is
a feathered composite over an inpainted background.
"""

import numpy as np

from hairtransfer.masks import (
    dilate,
    erode,
    face_target_mask,
    fallback_inpaint,
    ignore_region,
    soft_blend,
)

# A blob of "hair" on a 64 x 64 canvas, and a face disk below it.
yy, xx = np.mgrid[:64, :64]
hair = ((yy - 18) / 14.0) ** 2 + ((xx - 32) / 22.0) ** 2 <= 1
face = (yy - 38) ** 2 + (xx - 32) ** 2 <= 14**2
print("hair area", hair.sum(), "face area", face.sum())

# Morphology stops at the iteration count whose area is closest to the
# requested change; the stats say how close it got.
grown, gstats = dilate(hair, 0.2, return_stats=True)
shrunk, estats = erode(hair, 0.2, return_stats=True)
print(f"dilate: {gstats.iterations} steps, {gstats.achieved_area} px for a target of {gstats.target_area:.0f}")
print(f"erode:  {estats.iterations} steps, {estats.achieved_area} px for a target of {estats.target_area:.0f}")

# The ignore ring, and the face target that never overlaps the grown hair.
ring = ignore_region(grown, shrunk)
target = face_target_mask(face, grown)
print("ring px", ring.sum(), "face target px", target.sum())

# Compositing: cut the foreground out of a gradient "photo", fill the hole
# by harmonic inpainting, and paste a flat grey foreground back with a
# 2 px feather. With sigma 0 every pixel outside the support is untouched.
photo = np.stack([xx / 63.0, yy / 63.0, np.full((64, 64), 0.5)])
hole = face | hair
background = fallback_inpaint(photo, hole)
foreground = np.full_like(photo, 0.4)
support = face | grown
soft = soft_blend(foreground, background, support, 2.0)
hard = soft_blend(foreground, background, support, 0.0)
print("hard blend keeps the outside:", np.array_equal(hard[:, ~(support | hole)], photo[:, ~(support | hole)]))
print("feathering leaks", int(np.sum(np.any(soft != hard, axis=0) & ~support)), "px outside the support")
