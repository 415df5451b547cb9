#include "fluoro/numerics/precision.hpp"

#include "fluoro/errors.hpp"

namespace fluoro::nx {

namespace {
thread_local Precision current_precision = Precision::f64;
}

Precision precision() noexcept { return current_precision; }

void set_precision(Precision p) noexcept { current_precision = p; }

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(std::string_view s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ConfigError("unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

}  // namespace fluoro::nx
