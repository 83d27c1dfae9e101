#include "binconv_internal.hpp"

namespace bbcu::detail {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    static const bool supported = [] { return __builtin_cpu_supports("avx2") != 0; }();
    return supported;
#else
    return false;
#endif
}

} // namespace bbcu::detail
