#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace busi {

// Dense row-major tensor of doubles. Image tensors use NHWC layout.
// This is deliberately minimal: shape + flat storage.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
    }

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D / 3-D / 4-D element access for readability in non-hot code
    double& at(int i, int j) { return data_[idx2(i, j)]; }
    double at(int i, int j) const { return data_[idx2(i, j)]; }
    double& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    double at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    double& at(int i, int j, int k, int l) { return data_[idx4(i, j, k, l)]; }
    double at(int i, int j, int k, int l) const { return data_[idx4(i, j, k, l)]; }

    void reshape(std::vector<int> shape);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_string() const;

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

private:
    std::size_t idx2(int i, int j) const {
        return static_cast<std::size_t>(i) * shape_[1] + j;
    }
    std::size_t idx3(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k;
    }
    std::size_t idx4(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

// C = alpha * op(A) * op(B) + beta * C, row-major.
// a is m x k (or k x m when transpose_a), b is k x n (or n x k when transpose_b).
void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool transpose_a = false, bool transpose_b = false,
            double alpha = 1.0, double beta = 0.0);

}  // namespace busi
