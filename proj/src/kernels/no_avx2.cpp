#include "headprune/kernels.hpp"

namespace headprune::kernels {

const KernelTable* avx2_table() { return nullptr; }

}  // namespace headprune::kernels
