# Capture package
