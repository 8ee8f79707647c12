#pragma once

#include <string>
#include <string_view>

namespace karl {

std::string base64_encode(std::string_view data);
/// Throws InvalidArgument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace karl
