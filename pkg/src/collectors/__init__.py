# Label file, manifest and synthetic dataset input