#pragma once

namespace fluoro::fault {

// Deliberate defects that the self-test must detect. Only the self-test and
// its own tests switch these on.
enum class Fault {
    none,
    gelu_backward,     // perturbs the GELU derivative by 1%
    checkpoint_magic,  // checkpoint writer emits a wrong magic number
};

void set(Fault f) noexcept;
Fault active() noexcept;

class Scope {
public:
    explicit Scope(Fault f) noexcept : previous_(active()) { set(f); }
    ~Scope() { set(previous_); }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

private:
    Fault previous_;
};

}  // namespace fluoro::fault
