# Distortion services package
