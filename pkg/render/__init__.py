# Render package
