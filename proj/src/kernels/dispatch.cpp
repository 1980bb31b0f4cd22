#include <cstdlib>
#include <string_view>

#include <spdlog/spdlog.h>

#include "fedsim/kernels.hpp"

namespace fedsim::kernels {

#if defined(FEDSIM_HAVE_AVX2)
const KernelTable* avx2_table_impl();
#endif

const KernelTable* avx2_table()
{
#if defined(FEDSIM_HAVE_AVX2)
    return avx2_table_impl();
#else
    return nullptr;
#endif
}

bool cpu_supports(Isa isa)
{
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#if defined(FEDSIM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
        return false;
#endif
    }
    return false;
}

namespace {

const KernelTable& choose()
{
    const char* env = std::getenv("FEDSIM_KERNELS");
    const std::string_view request = env ? env : "auto";
    const bool avx2_usable = avx2_table() != nullptr && cpu_supports(Isa::avx2);

    if (request == "scalar") {
        return scalar_table();
    }
    if (request == "avx2") {
        if (avx2_usable) {
            return *avx2_table();
        }
        spdlog::warn("FEDSIM_KERNELS=avx2 requested but unavailable; using scalar kernels");
        return scalar_table();
    }
    if (request != "auto") {
        spdlog::warn("unknown FEDSIM_KERNELS value '{}'; selecting automatically", request);
    }
    return avx2_usable ? *avx2_table() : scalar_table();
}

}  // namespace

const KernelTable& active()
{
    static const KernelTable& table = choose();
    return table;
}

}  // namespace fedsim::kernels
