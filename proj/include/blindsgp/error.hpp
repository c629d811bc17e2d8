#pragma once

#include <stdexcept>
#include <string>

namespace blindsgp {

/// Every failure raised by the library (bad input, infeasible constraints,
/// solver breakdowns, malformed files).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace blindsgp
