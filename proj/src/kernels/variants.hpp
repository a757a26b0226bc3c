#pragma once

#include "dclone/kernels.hpp"

namespace dclone::kernels {

namespace scalar {
KernelTable make_table();
}
#if defined(DCLONE_HAVE_AVX2)
namespace avx2 {
KernelTable make_table();
}
#endif
#if defined(DCLONE_HAVE_NEON)
namespace neon {
KernelTable make_table();
}
#endif

}  // namespace dclone::kernels
