# Entities, errors, Toeplitz structures and the channel model
