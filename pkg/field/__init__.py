# Field package
