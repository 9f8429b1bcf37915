#pragma once

namespace abi {

// Single source of truth for the toolkit and container/checkpoint format
// versions.
const char* version_string();
constexpr unsigned container_format_version = 1;
constexpr unsigned checkpoint_format_version = 1;

}  // namespace abi
