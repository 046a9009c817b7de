#include "leads/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace leads::simd {
namespace {

const KernelTable* select_from_environment()
{
    const char* forced = std::getenv("LEADS_SIMD");
    if (forced != nullptr && std::string_view(forced) == "scalar") {
        return &scalar_kernels();
    }
    if (const KernelTable* fast = avx2_kernels()) {
        return fast;
    }
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot()
{
    static std::atomic<const KernelTable*> current{select_from_environment()};
    return current;
}

} // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

const KernelTable& set_active(const KernelTable& table)
{
    return *slot().exchange(&table);
}

} // namespace leads::simd
