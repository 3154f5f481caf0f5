#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dispel {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. An empty shape denotes a scalar.
class Tensor {
public:
    Tensor() : data_(1, 0.0) {}
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::vector<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t rank() const noexcept { return shape_.size(); }
    bool is_scalar() const noexcept { return shape_.empty(); }

    /// Matrix accessors; the tensor must be rank 2.
    std::size_t rows() const;
    std::size_t cols() const;
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row_span(std::size_t r) const;
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    /// Rows [begin, end) of a matrix, or an arbitrary row gather.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    Tensor gather_rows(std::span<const std::size_t> indices) const;
    Tensor transpose() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Plain (non-recorded) matrix product, shared by the tape and by
/// inference-only code paths so both produce bitwise-equal values.
Tensor matmul_values(const Tensor& a, const Tensor& b);

/// Concatenates matrices with equal column counts along rows.
Tensor vstack(std::span<const Tensor> parts);

}  // namespace dispel
