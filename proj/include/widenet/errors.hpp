#pragma once

#include <stdexcept>
#include <string>

namespace widenet {

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension, interval or parameter choices that cannot describe a valid model.
class invalid_config : public error {
public:
    explicit invalid_config(const std::string& what) : error("invalid config: " + what) {}
};

// Shape or symmetry mismatch between arguments.
class structural_error : public error {
public:
    explicit structural_error(const std::string& what) : error("structural error: " + what) {}
};

class numeric_error : public error {
public:
    explicit numeric_error(const std::string& what) : error("numeric error: " + what) {}
};

class monitor_unavailable : public error {
public:
    explicit monitor_unavailable(const std::string& what) : error("monitor unavailable: " + what) {}
};

} // namespace widenet
