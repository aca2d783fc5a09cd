# Services Package 