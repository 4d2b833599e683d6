// placeholder, implemented incrementally
