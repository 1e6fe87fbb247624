"""Volume models, file I/O, filters and phantom generation."""
