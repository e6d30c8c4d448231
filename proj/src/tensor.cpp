#include "cclab/tensor.hpp"

namespace cclab {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }
void set_grad_enabled(bool on) noexcept { g_grad_enabled = on; }

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cclab
