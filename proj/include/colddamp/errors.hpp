#pragma once

#include <stdexcept>
#include <string>

namespace colddamp {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_dimension_error : error {
    using error::error;
};

struct truncation_error : error {
    using error::error;
};

struct positivity_error : error {
    using error::error;
};

struct param_error : error {
    using error::error;
};

struct config_error : error {
    using error::error;
};

struct fit_error : error {
    using error::error;
};

struct calibration_error : error {
    using error::error;
};

}  // namespace colddamp
