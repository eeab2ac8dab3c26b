"""Self-supervised monocular depth estimation that adapts to arbitrary
test resolutions.

Training expands every video frame into three same-size views of the
scene at different scales, supervises each with photometric
reconstruction from its temporal neighbors, and ties the per-scale depth
predictions together over their geometrically corresponding regions. A
single trained model then keeps its accuracy when run at resolutions it
never saw.
"""

__version__ = "0.1.0"
