#include "p3o/kernels.hpp"

// header-only; this TU checks the header stands alone
