#include "abi/version.hpp"

namespace abi {

const char* version_string() { return "0.1.0"; }

}  // namespace abi
