#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "randsac/errors.hpp"
#include "randsac/rng.hpp"

namespace randsac {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. data.size() == product of extents always.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i >= 0 ? i : rank() + i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* where) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(where) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Trainable parameter: value plus an accumulated gradient of identical shape.
template <class T>
struct Parameter {
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    explicit Parameter(Tensor<T> v) : value(std::move(v)), grad(Tensor<T>::zeros(value.shape)) {}

    void zero_grad() { grad.fill(T(0)); }
};

}  // namespace randsac
