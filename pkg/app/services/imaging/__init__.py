# Image primitives and raster I/O
