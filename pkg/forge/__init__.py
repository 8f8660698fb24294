# Forge package
