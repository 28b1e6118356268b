# edge_core package
