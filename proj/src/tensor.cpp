#include "p3o/tensor.hpp"

// header-only; this TU checks the header stands alone
