# Depth stratification package
