#pragma once

#include "lasforge/kernels.hpp"

namespace lasforge::kernels::detail {

extern const KernelTable kScalarTable;
#if LASFORGE_WITH_AVX2
extern const KernelTable kAvx2Table;
#endif

}  // namespace lasforge::kernels::detail
