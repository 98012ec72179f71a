#pragma once

#include <json.hpp>

namespace tapolab {

// Insertion-ordered so encoded messages keep the field order of the device's
// own JSON; lookups stay order-insensitive.
using Json = nlohmann::ordered_json;

}  // namespace tapolab
