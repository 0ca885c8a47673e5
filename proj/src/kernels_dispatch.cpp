#include <cstdlib>
#include <string>

#include "longred/errors.hpp"
#include "longred/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
#include <cpuid.h>
#define LONGRED_X86 1
#endif

namespace longred::kern {

const char* isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "?";
}

#ifdef LONGRED_X86
namespace {
unsigned long long read_xcr0() {
    unsigned eax, edx;
    __asm__ volatile("xgetbv" : "=a"(eax), "=d"(edx) : "c"(0));
    return (static_cast<unsigned long long>(edx) << 32) | eax;
}
}  // namespace
#endif

bool cpu_has_avx2() {
#ifdef LONGRED_X86
    unsigned eax = 0, ebx = 0, ecx = 0, edx = 0;
    if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
    const bool avx2 = (ebx & (1u << 5)) != 0;
    if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
    const bool fma = (ecx & (1u << 12)) != 0;
    const bool osxsave = (ecx & (1u << 27)) != 0;
    if (!osxsave) return false;
    // YMM state must be enabled by the OS.
    return avx2 && fma && ((read_xcr0() & 0x6) == 0x6);
#else
    return false;
#endif
}

namespace {

bool avx2_lane_built() { return detail::avx2_table<double>().dot != nullptr; }

Isa resolve() {
    if (const char* env = std::getenv("LONGRED_KERNELS")) {
        const std::string want(env);
        if (want == "scalar") return Isa::scalar;
        if (want == "avx2") {
            if (!avx2_lane_built() || !cpu_has_avx2())
                throw ConfigError("LONGRED_KERNELS=avx2 requested but AVX2 lane is unavailable");
            return Isa::avx2;
        }
        if (want != "auto" && !want.empty())
            throw ConfigError("unknown LONGRED_KERNELS value: " + want);
    }
    if (avx2_lane_built() && cpu_has_avx2()) return Isa::avx2;
    return Isa::scalar;
}

// Lazy so a bad LONGRED_KERNELS value throws inside a catchable call stack.
Isa& active_slot() {
    static Isa isa = resolve();
    return isa;
}

}  // namespace

Isa detect_isa() { return resolve(); }

Isa active_isa() { return active_slot(); }

void force_isa(Isa isa) {
    if (isa == Isa::avx2 && (!avx2_lane_built() || !cpu_has_avx2()))
        throw ConfigError("cannot force avx2 kernels: lane unavailable");
    active_slot() = isa;
}

template <typename T>
const Table<T>& table(Isa isa) {
    switch (isa) {
        case Isa::avx2:
            if (detail::avx2_table<T>().dot) return detail::avx2_table<T>();
            break;
        case Isa::scalar:
            break;
    }
    return detail::scalar_table<T>();
}

template <typename T>
const Table<T>& active() {
    return table<T>(active_slot());
}

template const Table<float>& table<float>(Isa);
template const Table<double>& table<double>(Isa);
template const Table<float>& active<float>();
template const Table<double>& active<double>();

}  // namespace longred::kern
