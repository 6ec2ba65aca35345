# Classifier package
