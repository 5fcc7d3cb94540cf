# Estimators, experiment harness and use-case interfaces
