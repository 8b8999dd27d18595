#pragma once

#include "scoremean/kernels.hpp"

namespace scoremean::kernels {

#if defined(SCOREMEAN_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

}  // namespace scoremean::kernels
