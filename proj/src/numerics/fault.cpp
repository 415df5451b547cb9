#include "fluoro/fault.hpp"

#include <atomic>

namespace fluoro::fault {

namespace {
std::atomic<Fault> active_fault{Fault::none};
}

void set(Fault f) noexcept { active_fault.store(f); }

Fault active() noexcept { return active_fault.load(); }

}  // namespace fluoro::fault
