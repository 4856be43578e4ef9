#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgnet/errors.hpp"

namespace msgnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Row-major strides for a contiguous layout.
inline std::vector<std::size_t> shape_strides(const Shape& shape)
{
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;)
        strides[i - 1] = strides[i] * shape[i];
    return strides;
}

/// Resolve a possibly negative axis against a rank.
inline std::size_t normalize_axis(long axis, std::size_t rank)
{
    const long r = static_cast<long>(rank);
    if (axis < -r || axis >= r)
        throw RangeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

/// Dense row-major array of doubles. Plain value type: copies are deep.
/// A rank-0 tensor (empty shape) holds exactly one value.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape))
        , data_(shape_numel(shape_), fill)
    {
        check_extents();
    }

    Tensor(Shape shape, std::vector<double> values)
        : shape_(std::move(shape))
        , data_(std::move(values))
    {
        check_extents();
        if (data_.size() != shape_numel(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    /// Empty (default-constructed) tensors have no storage at all; scalars have one element.
    bool empty() const noexcept { return data_.empty(); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(long axis) const { return shape_[normalize_axis(axis, rank())]; }
    std::size_t numel() const noexcept { return data_.size(); }

    std::span<double> data() & noexcept { return data_; }
    std::span<const double> data() const& noexcept { return data_; }
    // A span into a temporary dangles inside range-for.
    std::span<const double> data() && = delete;
    const std::vector<double>& values() const& noexcept { return data_; }
    std::vector<double> values() && noexcept { return std::move(data_); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    const double& operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

    double item() const
    {
        if (data_.size() != 1)
            throw ContractError("item() requires a single-element tensor, got shape " + shape_str(shape_));
        return data_[0];
    }

    /// Same values under a new shape with equal element count.
    Tensor reshaped(Shape shape) const
    {
        if (shape_numel(shape) != numel())
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    void check_extents() const
    {
        for (auto e : shape_)
            if (e == 0)
                throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    }

    std::size_t offset(std::initializer_list<std::size_t> idx) const
    {
        if (idx.size() != shape_.size())
            throw DimensionError("index rank " + std::to_string(idx.size()) + " does not match shape " +
                                 shape_str(shape_));
        std::size_t off = 0;
        std::size_t axis = 0;
        for (auto i : idx) {
            if (i >= shape_[axis])
                throw RangeError("index " + std::to_string(i) + " out of range on axis " + std::to_string(axis));
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

/// Largest absolute elementwise difference; shapes must match.
inline double max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw DimensionError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace msgnet
