#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <string_view>

// Dense inner loops shared by the models and the aggregation code.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is picked once per process from the CPU
// feature bits; FEDSIM_KERNELS=scalar|avx2 overrides the choice. Vector
// variants reassociate sums, so results agree with the scalar reference to
// rounding (see tests/test_kernels.cpp) but are not bit-identical to it.
// Within one process every caller sees the same table, which is what the
// reproducibility guarantees rely on.

namespace fedsim::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    std::string_view name;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();

/// nullptr when the variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

/// Table chosen for this process.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y)
{
    assert(x.size() == y.size());
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b)
{
    assert(a.size() == b.size());
    return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace fedsim::kernels
