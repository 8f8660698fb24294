# Meshing package
