"""Quermass-interaction Gibbs point process: geometry, sampling, contours and cluster expansions."""
