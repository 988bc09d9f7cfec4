# Corpus planning package
