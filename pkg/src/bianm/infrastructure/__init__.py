# ADMM solver, config files and result storage
