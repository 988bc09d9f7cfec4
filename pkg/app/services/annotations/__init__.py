# COCO annotation parsing package
