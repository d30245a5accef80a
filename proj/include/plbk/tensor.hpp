#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace plbk {

// Error type thrown by library operations; the CLI turns these into
// structured exit messages.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major matrix. Vectors are (1 x n).
template <typename T>
struct Tensor {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), T(0)) {}

    T* row(int64_t i) { return data.data() + i * cols; }
    const T* row(int64_t i) const { return data.data() + i * cols; }

    T& operator()(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    const T& operator()(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }

    size_t size() const { return data.size(); }
    void zero() { std::fill(data.begin(), data.end(), T(0)); }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace plbk
