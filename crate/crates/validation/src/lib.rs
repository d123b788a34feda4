//! Holds the `acceptance` test target, which checks the end-to-end
//! guarantees of `layercomp` one criterion at a time. It has no library code.
