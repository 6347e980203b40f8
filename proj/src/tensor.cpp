#include "stad/tensor.hpp"

#include <cmath>
#include <sstream>

namespace stad {

std::string Tensor::shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

bool all_finite(const Tensor& t) {
    const float* p = t.data();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

void require_finite(const Tensor& t, const char* what) {
    if (!all_finite(t))
        throw NumericError(std::string("non-finite value in ") + what);
}

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* what) {
    if (t.shape() != shape)
        throw ShapeError(std::string(what) + ": expected shape " + Tensor::shape_str(shape) +
                         ", got " + Tensor::shape_str(t.shape()));
}

}  // namespace stad
