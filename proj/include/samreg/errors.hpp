#pragma once

#include <stdexcept>
#include <string>

namespace samreg {

/// Base class for all samreg exceptions.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Axis count / extent / channel mismatch between operands.
class dimension_error : public error {
public:
    explicit dimension_error(const std::string& msg) : error(msg) {}
};

/// Malformed value content (non-finite field, probability outside [0,1], ...).
class validation_error : public error {
public:
    explicit validation_error(const std::string& msg) : error(msg) {}
};

/// Operation requires a mask with positive mass.
class empty_roi_error : public error {
public:
    explicit empty_roi_error(const std::string& msg) : error(msg) {}
};

/// Operation requires a nonempty collection (pair set, manifest, ...).
class empty_input_error : public error {
public:
    explicit empty_input_error(const std::string& msg) : error(msg) {}
};

/// Candidate/mask index outside the referenced list.
class index_error : public error {
public:
    explicit index_error(const std::string& msg) : error(msg) {}
};

/// Pairing id does not belong to the synthetic case it is scored against.
class id_error : public error {
public:
    explicit id_error(const std::string& msg) : error(msg) {}
};

/// Input grid too small for the requested reduction.
class size_error : public error {
public:
    explicit size_error(const std::string& msg) : error(msg) {}
};

/// Prototype with zero norm cannot enter a cosine similarity.
class degenerate_prototype_error : public error {
public:
    explicit degenerate_prototype_error(const std::string& msg) : error(msg) {}
};

/// Synthetic blob placement failed after the attempt budget.
class placement_error : public error {
public:
    explicit placement_error(const std::string& msg) : error(msg) {}
};

/// Descent produced a non-finite loss.
class divergence_error : public error {
public:
    explicit divergence_error(const std::string& msg) : error(msg) {}
};

/// File cannot be read/parsed (bad magic, truncated payload, missing path).
class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

} // namespace samreg
