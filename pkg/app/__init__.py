# Distort Forge package
