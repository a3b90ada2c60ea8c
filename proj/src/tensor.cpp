#include "busi/tensor.hpp"

#include <cblas.h>

#include <sstream>

#include "busi/errors.hpp"

namespace busi {

void Tensor::reshape(std::vector<int> shape) {
    if (count(shape) != size()) {
        throw ShapeError("reshape from " + shape_string() + " would change element count");
    }
    shape_ = std::move(shape);
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool transpose_a, bool transpose_b, double alpha, double beta) {
    cblas_dgemm(CblasRowMajor,
                transpose_a ? CblasTrans : CblasNoTrans,
                transpose_b ? CblasTrans : CblasNoTrans,
                m, n, k, alpha,
                a, transpose_a ? m : k,
                b, transpose_b ? k : n,
                beta, c, n);
}

}  // namespace busi
