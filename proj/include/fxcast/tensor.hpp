#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fxcast/errors.hpp"

namespace fxcast {

class Tape;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n; // empty product = 1 (scalar)
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense row-major tensor of 64-bit floats.
///
/// Storage is shared between copies (cheap pass-by-value); operations always
/// allocate fresh outputs, so sharing is only observable through the explicit
/// mutable_data() hook used by initializers and the optimizer. A tensor may be
/// tracked on a Tape, in which case node() identifies its autodiff record.
class Tensor {
public:
    Tensor() : shape_{}, data_(std::make_shared<std::vector<double>>(1, 0.0)) {}

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(shape_numel(shape_), fill)) {}

    Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
        if (values.size() != shape_numel(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape_));
        }
        data_ = std::make_shared<std::vector<double>>(std::move(values));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_->size(); }

    const double* data() const { return data_->data(); }
    double* mutable_data() { return data_->data(); }
    const std::vector<double>& values() const { return *data_; }

    double operator[](std::size_t i) const { return (*data_)[i]; }

    /// Element access by multi-index (bounds-checked; intended for tests and glue).
    double at(std::initializer_list<std::size_t> idx) const { return (*data_)[offset(idx)]; }
    double& at_mut(std::initializer_list<std::size_t> idx) { return (*data_)[offset(idx)]; }

    bool requires_grad() const { return requires_grad_; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    /// Deep copy with no tape linkage.
    Tensor clone() const {
        Tensor t(shape_, *data_);
        return t;
    }

    /// Same storage, no tape linkage.
    Tensor detached() const {
        Tensor t = *this;
        t.tape_ = nullptr;
        t.node_ = -1;
        t.requires_grad_ = false;
        return t;
    }

    Tensor reshaped_view(Shape s) const {
        if (shape_numel(s) != numel()) {
            throw DimensionError("cannot view " + shape_str(shape_) + " as " + shape_str(s));
        }
        Tensor t = *this;
        t.shape_ = std::move(s);
        t.tape_ = nullptr;
        t.node_ = -1;
        t.requires_grad_ = false;
        return t;
    }

    void set_track(Tape* tape, int node) {
        tape_ = tape;
        node_ = node;
        requires_grad_ = tape != nullptr;
    }

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size()) {
            throw DimensionError("index rank " + std::to_string(idx.size()) + " vs tensor rank " +
                                 std::to_string(shape_.size()));
        }
        std::size_t off = 0;
        std::size_t axis = 0;
        for (auto i : idx) {
            if (i >= shape_[axis]) throw ParameterError("index out of range");
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    bool requires_grad_ = false;
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

} // namespace fxcast
