# Numerical services: networks, objectives, optimizers, estimators and benchmarks
