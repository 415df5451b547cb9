#pragma once

#include <string>
#include <string_view>

namespace fluoro::nx {

// Storage precision for tensor values. Arithmetic always runs in double;
// under `f32` every op output and every optimizer update is rounded to the
// nearest float, which reproduces 32-bit storage.
enum class Precision { f64, f32 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

std::string to_string(Precision p);
Precision precision_from_string(std::string_view s);

inline double round_to_precision(double v, Precision p) noexcept {
    return p == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// Thread-local: each training thread owns its setting.
class PrecisionScope {
public:
    explicit PrecisionScope(Precision p) noexcept : previous_(precision()) { set_precision(p); }
    ~PrecisionScope() { set_precision(previous_); }
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

private:
    Precision previous_;
};

}  // namespace fluoro::nx
