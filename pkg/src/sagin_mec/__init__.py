"""Joint trajectory, association, offloading and resource allocation for UAV/LEO assisted edge computing."""
