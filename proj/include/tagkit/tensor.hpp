#ifndef TAGKIT_TENSOR_HPP
#define TAGKIT_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <new>
#include <string>
#include <vector>

#include "tagkit/errors.hpp"

namespace tagkit {

// 64-byte-aligned storage. Vectorized math kernels pick their code path from
// pointer residues, so pinning every buffer to one residue class keeps
// results bit-reproducible across allocations and program runs.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::size_t kAlign = 64;

    AlignedAlloc() noexcept = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) noexcept {}

    T* allocate(std::size_t n) {
        std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
        void* p = std::aligned_alloc(kAlign, bytes);
        if (!p) throw std::bad_alloc();
        return static_cast<T*>(p);
    }
    void deallocate(T* p, std::size_t) noexcept { std::free(p); }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const noexcept { return true; }
    template <typename U>
    bool operator!=(const AlignedAlloc<U>&) const noexcept { return false; }
};

using AlignedVec = std::vector<double, AlignedAlloc<double>>;

// Dense NCHW tensor of doubles. Every array in the toolkit (images, message
// payloads, conv weights, loss scalars) uses this one type; vectors are
// (n, f, 1, 1), scalars (1, 1, 1, 1).
struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::size_t count() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape_(s), v_(s.count(), fill) {}
    Tensor(Shape s, const std::vector<double>& data)
        : shape_(s), v_(data.begin(), data.end()) {
        if (v_.size() != shape_.count())
            throw ShapeError("tensor data size " + std::to_string(v_.size()) +
                             " does not match shape " + shape_.str());
    }

    static Tensor zeros(Shape s) { return Tensor(s, 0.0); }
    static Tensor full(Shape s, double x) { return Tensor(s, x); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }

    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    double& at(int n, int c, int y, int x) {
        return v_[((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    double at(int n, int c, int y, int x) const {
        return v_[((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }

    // Reinterpret with a shape of equal element count.
    Tensor reshaped(Shape s) const {
        if (s.count() != shape_.count())
            throw ShapeError("reshape " + shape_.str() + " -> " + s.str());
        Tensor t;
        t.shape_ = s;
        t.v_ = v_;
        return t;
    }

    void fill(double x) { std::fill(v_.begin(), v_.end(), x); }

    AlignedVec& vec() { return v_; }
    const AlignedVec& vec() const { return v_; }

private:
    Shape shape_{0, 0, 0, 0};
    AlignedVec v_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace tagkit

#endif
