# Devanagari CNN Source Package
